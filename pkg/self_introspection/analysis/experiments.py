"""
Experiments on a trained classifier/autoencoder/estimator stack: noise
constellations, noise-injected training, targeted FGSM trajectories, the
split of error estimates between correct and misclassified samples, and
training-history paths through the atlas.
"""

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config import TrainConfig
from ..datasets import N_CLASSES, Dataset, add_awgn
from ..engine import NetworkSpec, forward, hidden_concat, input_gradient
from ..models import (
    ActivationRecords,
    AutoencoderModel,
    ClassifierModel,
    EstimatorModel,
    LatentPoint,
    encode_batch,
    estimate_batch,
    predict,
    record_activations,
    train_classifier,
)

logger = logging.getLogger(__name__)


# ============================================================================
# NOISE CONSTELLATIONS
# ============================================================================


@dataclass
class Constellation:
    sample_id: int | None
    sigma: float
    base: LatentPoint  # latent of the noiseless input
    latents: np.ndarray  # (draws, 2)
    labels: np.ndarray
    e_log10: np.ndarray
    displacement: np.ndarray  # latents - base

    def __len__(self) -> int:
        return self.latents.shape[0]

    @property
    def points(self) -> list[tuple[LatentPoint, int, float]]:
        return [
            (LatentPoint(float(z[0]), float(z[1])), int(label), float(e))
            for z, label, e in zip(self.latents, self.labels, self.e_log10)
        ]

    @property
    def mean_displacement(self) -> float:
        return float(np.mean(np.linalg.norm(self.displacement, axis=1)))


def _encode_inputs(model, vae, est, inputs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    records = record_activations(model, inputs, np.zeros(inputs.shape[0], dtype=np.int64))
    z = encode_batch(vae, records.h)
    return z, records.predicted, estimate_batch(est, z)


def noise_constellation(
    model: ClassifierModel,
    vae: AutoencoderModel,
    est: EstimatorModel,
    x,
    sigmas: list[float],
    n_draws: int,
    rng: np.random.Generator,
    sample_id: int | None = None,
) -> list[Constellation]:
    """Latent points of `n_draws` AWGN copies of one input, per noise level."""
    if n_draws < 1:
        raise ValueError("n_draws must be at least 1")
    x = np.asarray(x)
    copies = np.repeat(x[None, :], n_draws, axis=0)
    clean_z, _, _ = _encode_inputs(model, vae, est, copies)
    base = clean_z[0].astype(np.float64)

    constellations = []
    for sigma in sigmas:
        z, labels, e_log10 = _encode_inputs(model, vae, est, add_awgn(copies, sigma, rng))
        constellation = Constellation(
            sample_id=sample_id,
            sigma=float(sigma),
            base=LatentPoint(float(base[0]), float(base[1])),
            latents=z.astype(np.float64),
            labels=labels,
            e_log10=e_log10,
            displacement=z.astype(np.float64) - base,
        )
        logger.info(
            f"Constellation sigma={sigma:g}: mean displacement "
            f"{constellation.mean_displacement:.4f}, "
            f"{np.mean(labels == labels[0]) * 100:.1f}% keep the first label"
        )
        constellations.append(constellation)
    return constellations


def noise_accuracy_curve(
    model: ClassifierModel, dataset: Dataset, sigmas: list[float], rng: np.random.Generator
) -> np.ndarray:
    """(sigma, accuracy) rows for AWGN of each level added to the whole set."""
    rows = []
    for sigma in sigmas:
        labels, _ = predict(model, add_awgn(dataset.inputs, sigma, rng))
        rows.append((float(sigma), float(np.mean(labels == dataset.labels))))
    return np.array(rows)


def train_with_noise_injection(
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    sigma_max: float,
    *,
    spec: NetworkSpec | None = None,
    hidden_layers: int = 6,
    hidden_units: int = 128,
    test: Dataset | None = None,
) -> ClassifierModel:
    """Classifier training where every minibatch gets AWGN with sigma ~ U(0, sigma_max)."""
    if sigma_max <= 0:
        raise ValueError(f"sigma_max must be positive, got {sigma_max}")
    model, _ = train_classifier(
        train,
        val,
        config,
        spec=spec,
        hidden_layers=hidden_layers,
        hidden_units=hidden_units,
        test=test,
        input_noise_max=sigma_max,
    )
    return model


# ============================================================================
# FGSM
# ============================================================================


@dataclass(frozen=True)
class AttackStep:
    step: int
    digest: str  # sha1 of the input snapshot
    z: LatentPoint
    y_hat: np.ndarray
    label: int


@dataclass
class AttackTrajectory:
    source_id: int | None
    source_label: int | None
    target: int
    eps: float
    steps: list[AttackStep] = field(default_factory=list)
    success_step: int | None = None

    @property
    def success(self) -> bool:
        return self.success_step is not None

    @property
    def latents(self) -> np.ndarray:
        return np.array([[s.z.z1, s.z.z2] for s in self.steps])


def _snapshot(model, vae, x: np.ndarray, step: int) -> AttackStep:
    y_hat, hidden = forward(model.spec, model.params, x)
    z = encode_batch(vae, hidden_concat(hidden)[None, :])[0]
    return AttackStep(
        step=step,
        digest=hashlib.sha1(x.tobytes()).hexdigest(),
        z=LatentPoint(float(z[0]), float(z[1])),
        y_hat=y_hat,
        label=int(np.argmax(y_hat)),
    )


def fgsm_attack(
    model: ClassifierModel,
    vae: AutoencoderModel,
    x,
    target: int,
    eps: float = 0.01,
    max_steps: int = 100,
    *,
    source_id: int | None = None,
    source_label: int | None = None,
    continue_after_success: bool = False,
) -> AttackTrajectory:
    """
    Targeted iterative FGSM: x <- x - eps * sign(dE_adv/dx) with
    E_adv = (1/2)||y_target - y_hat||^2. Inputs are not clipped.
    """
    if not 0 <= target < N_CLASSES:
        raise ValueError(f"Target class must lie in 0..{N_CLASSES - 1}, got {target}")
    if eps < 0 or max_steps < 0:
        raise ValueError("eps and max_steps must be non-negative")
    x = np.array(x, dtype=np.float64)
    y_target = np.zeros(N_CLASSES)
    y_target[target] = 1.0

    trajectory = AttackTrajectory(source_id, source_label, target, eps)
    step = _snapshot(model, vae, x, 0)
    trajectory.steps.append(step)
    if step.label == target:
        trajectory.success_step = 0
        if not continue_after_success:
            return trajectory

    for i in range(1, max_steps + 1):
        grad = input_gradient(model.spec, model.params, x, step.y_hat - y_target)
        x = x - eps * np.sign(grad.astype(np.float64))
        step = _snapshot(model, vae, x, i)
        trajectory.steps.append(step)
        if step.label == target and trajectory.success_step is None:
            trajectory.success_step = i
            if not continue_after_success:
                break
    return trajectory


@dataclass
class AttackCampaign:
    trajectories: list[AttackTrajectory]

    @property
    def success_fraction(self) -> float:
        if not self.trajectories:
            return 0.0
        return float(np.mean([t.success for t in self.trajectories]))


def attack_campaign(
    model: ClassifierModel,
    vae: AutoencoderModel,
    dataset: Dataset,
    n_samples: int,
    eps: float,
    max_steps: int,
    rng: np.random.Generator,
    *,
    continue_after_success: bool = False,
    workers: int = 1,
) -> AttackCampaign:
    """Attack `n_samples` random inputs toward each of their nine wrong classes."""
    chosen = rng.choice(len(dataset), size=min(n_samples, len(dataset)), replace=False)
    jobs = [
        (int(i), target)
        for i in np.sort(chosen)
        for target in range(N_CLASSES)
        if target != dataset.labels[i]
    ]

    def run(job):
        i, target = job
        return fgsm_attack(
            model,
            vae,
            dataset.inputs[i],
            target,
            eps,
            max_steps,
            source_id=int(dataset.sample_ids[i]),
            source_label=int(dataset.labels[i]),
            continue_after_success=continue_after_success,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(run, jobs))
    else:
        trajectories = [run(job) for job in jobs]
    campaign = AttackCampaign(trajectories)
    logger.info(
        f"FGSM campaign: {len(jobs)} attacks, success fraction {campaign.success_fraction:.3f}"
    )
    return campaign


# ============================================================================
# ERROR-ESTIMATE SEPARATION
# ============================================================================


@dataclass
class ClassViolin:
    label: int
    correct: np.ndarray  # e_log10 of correctly classified samples of this class
    misclassified: np.ndarray

    @property
    def size(self) -> int:
        return self.correct.shape[0] + self.misclassified.shape[0]

    @property
    def sensitivity(self) -> float:
        return self.correct.shape[0] / self.size if self.size else float("nan")

    @property
    def correct_empty(self) -> bool:
        return self.correct.shape[0] == 0

    @property
    def misclassified_empty(self) -> bool:
        return self.misclassified.shape[0] == 0


def _median(values: np.ndarray) -> float:
    return float(np.median(values)) if values.size else float("nan")


@dataclass
class ViolinReport:
    classes: list[ClassViolin]
    sample_ids: np.ndarray
    y_true: np.ndarray
    predicted: np.ndarray
    e_log10: np.ndarray

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.y_true

    @property
    def accuracy(self) -> float:
        return float(np.mean(self.correct))

    def median_gap(self) -> float:
        """Median e_log10 of misclassified samples minus that of correct ones."""
        return _median(self.e_log10[~self.correct]) - _median(self.e_log10[self.correct])

    def rows(self) -> list[tuple]:
        return [
            (int(s), int(t), int(p), int(t == p), float(e))
            for s, t, p, e in zip(self.sample_ids, self.y_true, self.predicted, self.e_log10)
        ]

    def summary_rows(self) -> list[tuple]:
        return [
            (
                c.label,
                c.correct.shape[0],
                c.misclassified.shape[0],
                c.sensitivity,
                _median(c.correct),
                _median(c.misclassified),
            )
            for c in self.classes
        ]


def violin_report(
    model: ClassifierModel, vae: AutoencoderModel, est: EstimatorModel, test: Dataset
) -> ViolinReport:
    records = record_activations(model, test.inputs, test.labels, test.sample_ids)
    e_log10 = estimate_batch(est, encode_batch(vae, records.h))
    predicted = records.predicted
    correct = predicted == records.y_true
    classes = []
    for k in range(N_CLASSES):
        mask = records.y_true == k
        classes.append(ClassViolin(k, e_log10[mask & correct], e_log10[mask & ~correct]))
        if not mask.any():
            logger.warning(f"Class {k} has no test samples")
    report = ViolinReport(classes, records.sample_ids, records.y_true, predicted, e_log10)
    logger.info(
        f"Violin report: accuracy {report.accuracy:.4f}, median gap {report.median_gap():.3f} log10"
    )
    return report


# ============================================================================
# TRAINING HISTORY
# ============================================================================


@dataclass
class LatentTrajectory:
    sample_id: int
    label: int
    cycles: np.ndarray
    latents: np.ndarray  # (cycles, 2)
    predicted: np.ndarray


def training_trajectories(
    vae: AutoencoderModel, history: ActivationRecords
) -> list[LatentTrajectory]:
    """Per-sample latent paths through the per-cycle snapshots, ordered by cycle."""
    z = encode_batch(vae, history.h).astype(np.float64)
    predicted = history.predicted
    trajectories = []
    for sample_id in np.unique(history.sample_ids):
        rows = np.flatnonzero(history.sample_ids == sample_id)
        rows = rows[np.argsort(history.cycle[rows], kind="stable")]
        trajectories.append(
            LatentTrajectory(
                int(sample_id),
                int(history.y_true[rows[0]]),
                history.cycle[rows],
                z[rows],
                predicted[rows],
            )
        )
    return trajectories
