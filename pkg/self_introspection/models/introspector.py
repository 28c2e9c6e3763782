"""
Autoencoder over concatenated hidden activations and the error estimator
over its two-dimensional latent space.

The autoencoder is deterministic; its bottleneck is pulled toward a standard
normal prior with a squared maximum mean discrepancy penalty computed per
minibatch against fresh prior samples. The estimator regresses log10 of the
classifier's error from the latent point. Each model owns its parameters and
inputs to the next stage are materialized arrays, so no gradient can flow
back into an earlier stage.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from ..config import TrainConfig
from ..engine import (
    Activation,
    Mode,
    NetworkSpec,
    Params,
    backprop,
    fit,
    forward,
    half_mse,
    hidden_concat,
    trace,
)
from ..errors import ShapeError
from .classifier import ActivationRecords, ClassifierModel, HistoryEntry, classify

logger = logging.getLogger(__name__)

LATENT_DIM = 2
STD_FLOOR = 1e-8


class LatentPoint(NamedTuple):
    z1: float
    z2: float


# ============================================================================
# MAXIMUM MEAN DISCREPANCY
# ============================================================================


def _kernel(a: np.ndarray, b: np.ndarray, bandwidth_sq: float) -> np.ndarray:
    return np.exp(-cdist(a, b, "sqeuclidean") / (2.0 * bandwidth_sq))


def _point_set(points, name: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ShapeError(f"{name} must be a 2D array of points")
    if points.shape[0] < 2:
        raise ValueError(f"{name} needs at least 2 points, got {points.shape[0]}")
    return points


def mmd_sq(Z, P, bandwidth_sq: float = 2.0) -> float:
    """Biased (V-statistic) squared MMD with a Gaussian kernel exp(-|a-b|^2 / (2 s))."""
    Z = _point_set(Z, "Z")
    P = _point_set(P, "P")
    if Z.shape[1] != P.shape[1]:
        raise ShapeError(f"Point dimensions differ: {Z.shape[1]} vs {P.shape[1]}")
    value = (
        _kernel(Z, Z, bandwidth_sq).mean()
        + _kernel(P, P, bandwidth_sq).mean()
        - 2.0 * _kernel(Z, P, bandwidth_sq).mean()
    )
    return max(float(value), 0.0)


def mmd_sq_grad(Z, P, bandwidth_sq: float = 2.0) -> tuple[float, np.ndarray]:
    """mmd_sq(Z, P) and its gradient with respect to every point of Z."""
    Z = _point_set(Z, "Z")
    P = _point_set(P, "P")
    if Z.shape[1] != P.shape[1]:
        raise ShapeError(f"Point dimensions differ: {Z.shape[1]} vs {P.shape[1]}")
    n, m = Z.shape[0], P.shape[0]
    k_zz = _kernel(Z, Z, bandwidth_sq)
    k_pp = _kernel(P, P, bandwidth_sq)
    k_zp = _kernel(Z, P, bandwidth_sq)
    value = max(float(k_zz.mean() + k_pp.mean() - 2.0 * k_zp.mean()), 0.0)

    # d k(a, b) / d a = -k(a, b) (a - b) / s
    pull_zz = k_zz.sum(axis=1, keepdims=True) * Z - k_zz @ Z
    pull_zp = k_zp.sum(axis=1, keepdims=True) * Z - k_zp @ P
    grad = (-2.0 / (n * n * bandwidth_sq)) * pull_zz + (2.0 / (n * m * bandwidth_sq)) * pull_zp
    return value, grad


# ============================================================================
# AUTOENCODER
# ============================================================================


@dataclass
class AutoencoderModel:
    encoder_spec: NetworkSpec
    encoder_params: Params
    decoder_spec: NetworkSpec
    decoder_params: Params
    mean: np.ndarray
    std: np.ndarray
    mmd_weight: float = 1.0
    kernel_bandwidth_sq: float = 2.0
    history: list[HistoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.encoder_spec.output_width != LATENT_DIM:
            raise ShapeError(f"Bottleneck must be {LATENT_DIM} wide")
        if self.decoder_spec.input_width != LATENT_DIM:
            raise ShapeError(f"Decoder must take {LATENT_DIM} inputs")
        if self.encoder_spec.input_width != self.decoder_spec.output_width:
            raise ShapeError("Encoder input and decoder output widths differ")
        n_hidden = self.encoder_spec.input_width
        if self.mean.shape != (n_hidden,) or self.std.shape != (n_hidden,):
            raise ShapeError(f"Standardization vectors must have length {n_hidden}")
        if np.any(self.std <= 0):
            raise ShapeError("Standardization std must be positive")
        self.encoder_params.check(self.encoder_spec)
        self.decoder_params.check(self.decoder_spec)

    @property
    def n_hidden(self) -> int:
        return self.encoder_spec.input_width


def build_autoencoder_specs(
    n_hidden: int, hidden_units: list[int], dropout_keep: float = 1.0
) -> tuple[NetworkSpec, NetworkSpec]:
    """Encoder N_h -> units... -> 2 and the mirrored decoder 2 -> ...units -> N_h, linear ends."""
    encoder = NetworkSpec.stack(
        [n_hidden, *hidden_units, LATENT_DIM], Activation.ELU, Activation.LINEAR, dropout_keep
    )
    decoder = NetworkSpec.stack(
        [LATENT_DIM, *reversed(hidden_units), n_hidden],
        Activation.ELU,
        Activation.LINEAR,
        dropout_keep,
    )
    return encoder, decoder


def fit_standardization(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-component mean and std of the training activations. Constant components get std 1."""
    h = np.asarray(h, dtype=np.float64)
    mean = h.mean(axis=0)
    std = h.std(axis=0)
    constant = std < STD_FLOOR
    if np.any(constant):
        logger.warning(
            f"{int(constant.sum())} of {h.shape[1]} activation components are constant; "
            "leaving them unscaled"
        )
    return mean, np.where(constant, 1.0, std)


def standardize(model: AutoencoderModel, h) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != model.n_hidden:
        raise ShapeError(f"Expected activations of width {model.n_hidden}, got {h.shape[-1]}")
    return ((h - model.mean) / model.std).astype(model.encoder_params.dtype)


def destandardize(model: AutoencoderModel, h_std) -> np.ndarray:
    return np.asarray(h_std, dtype=np.float64) * model.std + model.mean


def encode_standardized(model: AutoencoderModel, h_std) -> np.ndarray:
    z, _ = forward(model.encoder_spec, model.encoder_params, h_std)
    return z


def encode(model: AutoencoderModel, h):
    """Latent point of one activation vector, or an (n, 2) array for a batch."""
    z = encode_standardized(model, standardize(model, h))
    if z.ndim == 1:
        return LatentPoint(float(z[0]), float(z[1]))
    return z


def encode_batch(model: AutoencoderModel, h, chunk_size: int = 4096) -> np.ndarray:
    h = np.atleast_2d(np.asarray(h))
    parts = [
        encode_standardized(model, standardize(model, h[start : start + chunk_size]))
        for start in range(0, h.shape[0], chunk_size)
    ]
    if not parts:
        return np.zeros((0, LATENT_DIM), dtype=model.encoder_params.dtype)
    return np.concatenate(parts)


def _latent_array(model: AutoencoderModel, z) -> np.ndarray:
    return np.asarray(z, dtype=model.decoder_params.dtype)


def decode(model: AutoencoderModel, z) -> np.ndarray:
    """Reconstruction in standardized activation units."""
    h_hat, _ = forward(model.decoder_spec, model.decoder_params, _latent_array(model, z))
    return h_hat


def reconstruct(model: AutoencoderModel, h) -> np.ndarray:
    """decode(encode(h)) mapped back to raw activation units."""
    z = encode_standardized(model, standardize(model, h))
    return destandardize(model, decode(model, z))


def reconstruction_error(model: AutoencoderModel, h) -> float:
    """Mean (1/2)||h_hat - h||^2 in standardized units."""
    h_std = standardize(model, np.atleast_2d(h))
    diff = decode(model, encode_standardized(model, h_std)).astype(np.float64) - h_std
    return float(0.5 * np.mean(np.sum(diff * diff, axis=1)))


def latent_mmd(model: AutoencoderModel, h, n_prior: int, rng: np.random.Generator) -> float:
    """mmd_sq between the encoded activations and `n_prior` standard normal samples."""
    z = encode_batch(model, h)
    prior = rng.standard_normal((n_prior, LATENT_DIM))
    return mmd_sq(z, prior, model.kernel_bandwidth_sq)


def _activations(data) -> np.ndarray:
    if isinstance(data, ActivationRecords):
        return data.h
    return np.atleast_2d(np.asarray(data))


def train_autoencoder(
    records,
    config: TrainConfig,
    *,
    mmd_weight: float = 1.0,
    kernel_bandwidth_sq: float = 2.0,
    hidden_units: list[int] | None = None,
    val=None,
) -> AutoencoderModel:
    """
    Minimize (1/2)||h_hat - h||^2 + mmd_weight * mmd_sq(batch latents, prior samples)
    over standardized activations. `records` and `val` are ActivationRecords or
    raw activation arrays; validation uses the reconstruction term only.
    """
    h = _activations(records)
    if h.shape[0] == 0:
        raise ValueError("Cannot train an autoencoder on zero records")
    if mmd_weight < 0:
        raise ValueError("mmd_weight must be non-negative")
    hidden_units = list(hidden_units or [200, 200, 200])

    dtype = config.dtype
    mean, std = fit_standardization(h)
    encoder_spec, decoder_spec = build_autoencoder_specs(h.shape[1], hidden_units, config.dropout_keep)
    init_rng = np.random.default_rng([config.seed, 0])
    encoder_params = Params.initialize(encoder_spec, init_rng, dtype)
    decoder_params = Params.initialize(decoder_spec, init_rng, dtype)
    n_encoder = len(encoder_spec.layers)

    def model_for(p: Params) -> AutoencoderModel:
        enc, dec = p.split(n_encoder)
        return AutoencoderModel(
            encoder_spec, enc, decoder_spec, dec, mean, std, mmd_weight, kernel_bandwidth_sq
        )

    h_std = ((np.asarray(h, dtype=np.float64) - mean) / std).astype(dtype)

    def loss_and_grads(p: Params, idx: np.ndarray, rng: np.random.Generator):
        enc, dec = p.split(n_encoder)
        target = h_std[idx]
        n = target.shape[0]
        enc_trace = trace(encoder_spec, enc, target, Mode.TRAIN, rng, check_finite=True)
        z = enc_trace.output
        dec_trace = trace(decoder_spec, dec, z, Mode.TRAIN, rng, check_finite=True)
        diff = dec_trace.output - target
        loss = 0.5 * float(np.sum(diff.astype(np.float64) ** 2)) / n
        dec_grads, grad_z = backprop(decoder_spec, dec, dec_trace, diff / diff.dtype.type(n))
        if mmd_weight > 0 and n >= 2:
            prior = rng.standard_normal((n, LATENT_DIM))
            mmd, mmd_grad = mmd_sq_grad(z, prior, kernel_bandwidth_sq)
            loss += mmd_weight * mmd
            grad_z = grad_z + (mmd_weight * mmd_grad).astype(grad_z.dtype)
        enc_grads, _ = backprop(encoder_spec, enc, enc_trace, grad_z)
        return loss, enc_grads.concat(dec_grads)

    validate = None
    val_h = _activations(val) if val is not None else None
    if val_h is not None and val_h.shape[0]:
        def validate(p: Params) -> float:
            return reconstruction_error(model_for(p), val_h)

    result = fit(
        encoder_params.concat(decoder_params),
        config,
        h.shape[0],
        loss_and_grads,
        validate=validate,
        name="autoencoder",
    )
    model = model_for(result.params)
    model.history = [
        HistoryEntry(cycle=r.cycle, train_error=r.train_loss, val_error=r.val_loss)
        for r in result.history
    ]
    return model


# ============================================================================
# ERROR ESTIMATOR
# ============================================================================


@dataclass
class EstimatorModel:
    spec: NetworkSpec
    params: Params
    target_floor: float = 1e-8
    history: list[HistoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.spec.input_width != LATENT_DIM:
            raise ShapeError(f"Estimator must take {LATENT_DIM} inputs")
        if self.spec.output_width != 1 or self.spec.layers[-1].activation is not Activation.LINEAR:
            raise ShapeError("Estimator must end in a single linear unit")
        if self.target_floor <= 0:
            raise ValueError("target_floor must be positive")
        self.params.check(self.spec)


def build_estimator_spec(hidden_units: list[int], dropout_keep: float = 1.0) -> NetworkSpec:
    return NetworkSpec.stack(
        [LATENT_DIM, *hidden_units, 1], Activation.ELU, Activation.LINEAR, dropout_keep
    )


def error_targets(e, target_floor: float = 1e-8) -> np.ndarray:
    """log10(e + floor), the quantity the estimator regresses."""
    return np.log10(np.asarray(e, dtype=np.float64) + target_floor)


def estimate_error(est: EstimatorModel, z):
    """Estimated log10 error: a float for one latent point, an array for a batch."""
    z = np.asarray(z, dtype=est.params.dtype)
    out, _ = forward(est.spec, est.params, z)
    if z.ndim == 1:
        return float(out[0])
    return out[:, 0].astype(np.float64)


def estimate_batch(est: EstimatorModel, z, chunk_size: int = 4096) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z))
    return np.concatenate(
        [estimate_error(est, z[start : start + chunk_size]) for start in range(0, z.shape[0], chunk_size)]
        or [np.zeros(0)]
    )


def confidence(e_log10):
    """c = -e_log10: typical, trusted behaviour scores high."""
    if np.ndim(e_log10) == 0:
        return -float(e_log10)
    return -np.asarray(e_log10, dtype=np.float64)


def train_estimator(
    vae: AutoencoderModel,
    records: ActivationRecords,
    config: TrainConfig,
    *,
    target_floor: float = 1e-8,
    hidden_units: list[int] | None = None,
    val: ActivationRecords | None = None,
) -> EstimatorModel:
    """Fit (encode(h), log10(e + floor)) pairs with the half squared error."""
    if len(records) == 0:
        raise ValueError("Cannot train an estimator on zero records")
    hidden_units = list(hidden_units or [200, 200, 200])
    dtype = config.dtype
    spec = build_estimator_spec(hidden_units, config.dropout_keep)
    params = Params.initialize(spec, np.random.default_rng([config.seed, 0]), dtype)

    # Latents are computed once; the autoencoder never sees these gradients
    z = encode_batch(vae, records.h).astype(dtype)
    targets = error_targets(records.e, target_floor)[:, None].astype(dtype)

    def loss_and_grads(p: Params, idx: np.ndarray, rng: np.random.Generator):
        return half_mse(spec, p, z[idx], targets[idx], Mode.TRAIN, rng)

    validate = None
    if val is not None and len(val):
        val_z = encode_batch(vae, val.h).astype(dtype)
        val_targets = error_targets(val.e, target_floor)

        def validate(p: Params) -> float:
            estimate = estimate_batch(EstimatorModel(spec, p, target_floor), val_z)
            return float(0.5 * np.mean((estimate - val_targets) ** 2))

    result = fit(params, config, len(records), loss_and_grads, validate=validate, name="estimator")
    history = [
        HistoryEntry(cycle=r.cycle, train_error=r.train_loss, val_error=r.val_loss)
        for r in result.history
    ]
    return EstimatorModel(spec, result.params, target_floor, history)


# ============================================================================
# REAL-TIME INTROSPECTION
# ============================================================================


@dataclass(frozen=True)
class Introspection:
    label: int
    y_hat: np.ndarray
    h: np.ndarray
    z: LatentPoint
    e_log10: float
    confidence: float


def introspect(
    classifier: ClassifierModel, vae: AutoencoderModel, est: EstimatorModel, x
) -> Introspection:
    """Classify one input and report where it lands in the atlas and how much to trust it."""
    label, y_hat = classify(classifier, x)
    _, hidden = forward(classifier.spec, classifier.params, x)
    h = hidden_concat(hidden)
    z = encode(vae, h)
    e_log10 = estimate_error(est, np.array(z))
    return Introspection(label, y_hat, h, z, e_log10, confidence(e_log10))
