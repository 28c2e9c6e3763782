"""
The classifier under introspection: an ELU multilayer perceptron with ten
sigmoid outputs trained on the half squared error, plus the activation
records every other component is built from.
"""

import logging
from collections.abc import Iterator
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel

from ..config import TrainConfig
from ..datasets import N_CLASSES, Dataset, add_awgn, one_hot
from ..engine import (
    Activation,
    Mode,
    NetworkSpec,
    Params,
    fit,
    forward,
    half_mse,
    hidden_concat,
)
from ..errors import ShapeError

logger = logging.getLogger(__name__)

NO_CYCLE = -1


class HistoryEntry(BaseModel):
    cycle: int
    train_error: float
    val_error: float | None = None
    test_accuracy: float | None = None


@dataclass
class ClassifierModel:
    spec: NetworkSpec
    params: Params
    history: list[HistoryEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.spec.output_width != N_CLASSES:
            raise ShapeError(f"Classifier must have {N_CLASSES} outputs, got {self.spec.output_width}")
        if self.spec.layers[-1].activation is not Activation.SIGMOID:
            raise ShapeError("Classifier output layer must be sigmoid")
        if any(layer.activation is not Activation.ELU for layer in self.spec.layers[:-1]):
            raise ShapeError("Classifier hidden layers must be ELU")
        self.params.check(self.spec)

    @property
    def hidden_widths(self) -> list[int]:
        return self.spec.hidden_widths

    @property
    def n_hidden(self) -> int:
        """N_h, the length of a concatenated activation vector."""
        return sum(self.spec.hidden_widths)


def build_classifier_spec(
    input_width: int, hidden_layers: int, hidden_units: int, dropout_keep: float = 1.0
) -> NetworkSpec:
    if hidden_layers < 1:
        raise ValueError("The classifier needs at least one hidden layer")
    return NetworkSpec.stack(
        [input_width] + [hidden_units] * hidden_layers + [N_CLASSES],
        hidden=Activation.ELU,
        output=Activation.SIGMOID,
        dropout_keep=dropout_keep,
    )


def half_squared_error(y, y_hat) -> np.ndarray:
    """(1/2)||y - y_hat||^2 per sample, in float64."""
    diff = np.asarray(y, dtype=np.float64) - np.asarray(y_hat, dtype=np.float64)
    return 0.5 * np.sum(diff * diff, axis=-1)


# ============================================================================
# ACTIVATION RECORDS
# ============================================================================


@dataclass(frozen=True)
class ActivationRecord:
    sample_id: int
    h: np.ndarray
    y_true: int
    y_hat: np.ndarray
    e: float
    cycle: int | None = None


@dataclass
class ActivationRecords:
    """Columnar store of activation records: one row per (sample, snapshot)."""

    sample_ids: np.ndarray
    h: np.ndarray
    y_true: np.ndarray
    y_hat: np.ndarray
    e: np.ndarray
    cycle: np.ndarray  # NO_CYCLE for records of the final model

    def __post_init__(self):
        n = self.h.shape[0]
        for name in ("sample_ids", "y_true", "e", "cycle"):
            if getattr(self, name).shape != (n,):
                raise ShapeError(f"Record column '{name}' must have {n} entries")
        if self.y_hat.shape != (n, N_CLASSES):
            raise ShapeError(f"Record column 'y_hat' must be {n}x{N_CLASSES}")
        if n and np.any(self.e < 0):
            raise ShapeError("Record errors must be non-negative")

    def __len__(self) -> int:
        return self.h.shape[0]

    def __getitem__(self, i: int) -> ActivationRecord:
        cycle = int(self.cycle[i])
        return ActivationRecord(
            sample_id=int(self.sample_ids[i]),
            h=self.h[i],
            y_true=int(self.y_true[i]),
            y_hat=self.y_hat[i],
            e=float(self.e[i]),
            cycle=None if cycle == NO_CYCLE else cycle,
        )

    def __iter__(self) -> Iterator[ActivationRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_hidden(self) -> int:
        return self.h.shape[1]

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.y_hat, axis=1)

    @property
    def correct(self) -> np.ndarray:
        return self.predicted == self.y_true

    def subset(self, indices) -> "ActivationRecords":
        indices = np.asarray(indices, dtype=np.int64)
        return ActivationRecords(
            self.sample_ids[indices],
            self.h[indices],
            self.y_true[indices],
            self.y_hat[indices],
            self.e[indices],
            self.cycle[indices],
        )

    def for_cycle(self, cycle: int | None) -> "ActivationRecords":
        return self.subset(np.flatnonzero(self.cycle == (NO_CYCLE if cycle is None else cycle)))

    @classmethod
    def concat(cls, parts: list["ActivationRecords"]) -> "ActivationRecords":
        if not parts:
            raise ValueError("Nothing to concatenate")
        return cls(
            *(
                np.concatenate([getattr(p, name) for p in parts])
                for name in ("sample_ids", "h", "y_true", "y_hat", "e", "cycle")
            )
        )


# ============================================================================
# INFERENCE
# ============================================================================


def predict(model: ClassifierModel, inputs, chunk_size: int = 4096) -> tuple[np.ndarray, np.ndarray]:
    """Labels and sigmoid outputs for a batch, Eval mode."""
    inputs = np.atleast_2d(np.asarray(inputs))
    outputs = [
        forward(model.spec, model.params, inputs[start : start + chunk_size])[0]
        for start in range(0, inputs.shape[0], chunk_size)
    ]
    y_hat = np.concatenate(outputs) if outputs else np.zeros((0, N_CLASSES), model.params.dtype)
    # np.argmax returns the first maximum, so ties go to the lowest class
    return np.argmax(y_hat, axis=1), y_hat


def classify(model: ClassifierModel, x) -> tuple[int, np.ndarray]:
    y_hat, _ = forward(model.spec, model.params, x)
    if y_hat.ndim != 1:
        raise ShapeError("classify takes a single input vector; use predict for batches")
    return int(np.argmax(y_hat)), y_hat


def accuracy(model: ClassifierModel, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise ValueError("Cannot measure accuracy on an empty set")
    labels, _ = predict(model, dataset.inputs)
    return float(np.mean(labels == dataset.labels))


def _record_chunk(model: ClassifierModel, inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y_hat, hidden = forward(model.spec, model.params, inputs)
    return hidden_concat(hidden), y_hat


def record_activations(
    model: ClassifierModel,
    inputs,
    labels,
    sample_ids=None,
    cycle: int | None = None,
    workers: int = 1,
    chunk_size: int = 1024,
) -> ActivationRecords:
    """
    Eval-mode forward pass per sample: concatenated hidden vector h, prediction
    and e = (1/2)||y - y_hat||^2. Chunks are spread over `workers` threads.
    """
    inputs = np.atleast_2d(np.asarray(inputs))
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if inputs.shape[0] != labels.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} inputs but {labels.shape[0]} labels")
    if inputs.shape[1] != model.spec.input_width:
        raise ShapeError(
            f"Expected inputs of width {model.spec.input_width}, got {inputs.shape[1]}"
        )
    n = inputs.shape[0]
    sample_ids = (
        np.arange(n, dtype=np.int64) if sample_ids is None else np.asarray(sample_ids, np.int64)
    )
    chunks = [inputs[start : start + chunk_size] for start in range(0, n, chunk_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: _record_chunk(model, c), chunks))
    else:
        results = [_record_chunk(model, c) for c in chunks]

    if results:
        h = np.concatenate([r[0] for r in results])
        y_hat = np.concatenate([r[1] for r in results])
    else:
        h = np.zeros((0, model.n_hidden), model.params.dtype)
        y_hat = np.zeros((0, N_CLASSES), model.params.dtype)
    return ActivationRecords(
        sample_ids=sample_ids,
        h=h,
        y_true=labels,
        y_hat=y_hat,
        e=half_squared_error(one_hot(labels), y_hat),
        cycle=np.full(n, NO_CYCLE if cycle is None else cycle, dtype=np.int64),
    )


def mean_error(model: ClassifierModel, dataset: Dataset, chunk_size: int = 4096) -> float:
    """Mean half squared error over a dataset, Eval mode."""
    _, y_hat = predict(model, dataset.inputs, chunk_size)
    return float(np.mean(half_squared_error(dataset.one_hot, y_hat)))


# ============================================================================
# TRAINING
# ============================================================================


def train_classifier(
    train: Dataset,
    val: Dataset,
    config: TrainConfig,
    *,
    spec: NetworkSpec | None = None,
    hidden_layers: int = 6,
    hidden_units: int = 128,
    snapshot_probe: Dataset | None = None,
    test: Dataset | None = None,
    input_noise_max: float = 0.0,
) -> tuple[ClassifierModel, ActivationRecords | None]:
    """
    Minibatch Adam with cyclic learning rate and cycle-end early stopping.

    With `snapshot_probe`, Eval-mode activation records of the probe are taken
    at every cycle end. With `input_noise_max` > 0 every minibatch gets AWGN
    with sigma ~ U(0, input_noise_max); validation stays noiseless.
    """
    if input_noise_max < 0:
        raise ValueError("input_noise_max must be non-negative")
    if spec is None:
        spec = build_classifier_spec(train.width, hidden_layers, hidden_units, config.dropout_keep)
    elif spec.dropout_keep != config.dropout_keep:
        spec = spec.model_copy(update={"dropout_keep": config.dropout_keep})

    dtype = config.dtype
    params = Params.initialize(spec, np.random.default_rng([config.seed, 0]), dtype)
    inputs = train.inputs.astype(dtype, copy=False)
    targets = train.one_hot.astype(dtype)
    noise_rng = np.random.default_rng([config.seed, 1])

    def loss_and_grads(p: Params, idx: np.ndarray, rng: np.random.Generator):
        x = inputs[idx]
        if input_noise_max > 0:
            x = add_awgn(x, noise_rng.uniform(0.0, input_noise_max), noise_rng)
        return half_mse(spec, p, x, targets[idx], Mode.TRAIN, rng)

    def validate(p: Params) -> float:
        return mean_error(ClassifierModel(spec, p), val)

    snapshots: list[ActivationRecords] = []
    test_accuracy: dict[int, float] = {}

    def on_cycle_end(cycle: int, p: Params) -> None:
        current = ClassifierModel(spec, p)
        if snapshot_probe is not None:
            snapshots.append(
                record_activations(
                    current,
                    snapshot_probe.inputs,
                    snapshot_probe.labels,
                    snapshot_probe.sample_ids,
                    cycle=cycle,
                )
            )
        if test is not None:
            test_accuracy[cycle] = accuracy(current, test)
            logger.info(f"classifier cycle {cycle}: test accuracy {test_accuracy[cycle]:.4f}")

    result = fit(
        params,
        config,
        len(train),
        loss_and_grads,
        validate=validate if len(val) else None,
        on_cycle_end=on_cycle_end,
        name="classifier",
    )
    history = [
        HistoryEntry(
            cycle=record.cycle,
            train_error=record.train_loss,
            val_error=record.val_loss,
            test_accuracy=test_accuracy.get(record.cycle),
        )
        for record in result.history
    ]
    model = ClassifierModel(spec, result.params, history)
    return model, ActivationRecords.concat(snapshots) if snapshots else None
