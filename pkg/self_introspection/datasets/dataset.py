"""In-memory labelled image sets."""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError

N_CLASSES = 10


def one_hot(labels, n_classes: int = N_CLASSES) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    encoded[np.arange(labels.shape[0]), labels] = 1.0
    return encoded


@dataclass(frozen=True)
class Dataset:
    """
    Flattened inputs (one sample per row), class labels and the position of
    every sample in its source file.
    """

    inputs: np.ndarray
    labels: np.ndarray
    sample_ids: np.ndarray | None = None

    def __post_init__(self):
        inputs = np.asarray(self.inputs)
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2:
            raise ShapeError(f"Inputs must be a 2D array, got shape {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise ShapeError(
                f"{inputs.shape[0]} inputs but {labels.shape[0] if labels.ndim else 0} labels"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= N_CLASSES):
            raise ShapeError(f"Labels must lie in 0..{N_CLASSES - 1}")
        if not np.all(np.isfinite(inputs)):
            raise ShapeError("Inputs contain non-finite values")
        sample_ids = (
            np.arange(inputs.shape[0], dtype=np.int64)
            if self.sample_ids is None
            else np.asarray(self.sample_ids, dtype=np.int64)
        )
        if sample_ids.shape != labels.shape:
            raise ShapeError("sample_ids must have one entry per sample")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", sample_ids)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.inputs.shape[1]

    @property
    def one_hot(self) -> np.ndarray:
        return one_hot(self.labels)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(self.inputs[indices], self.labels[indices], self.sample_ids[indices])

    def position_of(self, sample_id: int) -> int:
        matches = np.flatnonzero(self.sample_ids == sample_id)
        if matches.size == 0:
            raise KeyError(f"Sample {sample_id} is not part of this dataset")
        return int(matches[0])

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES)
