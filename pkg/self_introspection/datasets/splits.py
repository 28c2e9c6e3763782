"""
Deterministic stratified splits, additive white Gaussian noise and the
Hausdorff-distance diagnostic for point clouds.
"""

import logging

import numpy as np
from scipy.spatial.distance import cdist

from ..config import RunConfig, SplitSpec
from ..errors import ShapeError
from .dataset import N_CLASSES, Dataset
from .idx import load_idx

logger = logging.getLogger(__name__)


def _class_quotas(count: int, available: np.ndarray, proportions: np.ndarray) -> np.ndarray:
    """Largest-remainder allocation of `count` draws over classes, capped by `available`."""
    exact = count * proportions
    quotas = np.minimum(np.floor(exact).astype(np.int64), available)
    # leftover draws go to the largest fractional parts first, lowest class on ties
    order = np.lexsort((np.arange(len(exact)), -(exact - np.floor(exact))))
    shortfall = count - int(quotas.sum())
    while shortfall > 0:
        progressed = False
        for k in order:
            if shortfall == 0:
                break
            if quotas[k] < available[k]:
                quotas[k] += 1
                shortfall -= 1
                progressed = True
        if not progressed:
            raise ValueError(f"Cannot draw {count} samples from the remaining pool")
    return quotas


def split_indices(labels: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pairwise-disjoint index sets for train, validation and test."""
    labels = np.asarray(labels, dtype=np.int64)
    counts = (spec.train_count, spec.val_count, spec.test_count)
    if sum(counts) > labels.shape[0]:
        raise ValueError(
            f"Split asks for {sum(counts)} samples but only {labels.shape[0]} are available"
        )

    rng = np.random.default_rng(spec.seed)
    pools = [rng.permutation(np.flatnonzero(labels == k)) for k in range(N_CLASSES)]
    available = np.array([len(pool) for pool in pools], dtype=np.int64)
    proportions = available / max(labels.shape[0], 1)
    taken = np.zeros(N_CLASSES, dtype=np.int64)

    parts = []
    for count in counts:
        quotas = _class_quotas(count, available - taken, proportions)
        chosen = [pools[k][taken[k] : taken[k] + quotas[k]] for k in range(N_CLASSES)]
        taken += quotas
        parts.append(rng.permutation(np.concatenate(chosen)).astype(np.int64))
    return parts[0], parts[1], parts[2]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Stratified, seeded partition into (train, val, test). Source sample ids are kept."""
    train_idx, val_idx, test_idx = split_indices(dataset.labels, spec)
    logger.info(
        f"Split {len(dataset)} samples into {len(train_idx)}/{len(val_idx)}/{len(test_idx)} "
        f"(seed {spec.seed})"
    )
    return dataset.subset(train_idx), dataset.subset(val_idx), dataset.subset(test_idx)


def add_awgn(x, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """x + n with n ~ N(0, sigma^2 I). Values are not clipped to [0, 1]."""
    if sigma < 0:
        raise ValueError(f"Noise level must be non-negative, got {sigma}")
    x = np.asarray(x)
    dtype = x.dtype if np.issubdtype(x.dtype, np.floating) else np.float64
    if sigma == 0:
        return x.astype(dtype, copy=True)
    return (x + rng.normal(0.0, sigma, size=x.shape)).astype(dtype)


def _directed(a: np.ndarray, b: np.ndarray, chunk: int) -> float:
    worst = 0.0
    for start in range(0, a.shape[0], chunk):
        distances = cdist(a[start : start + chunk], b)
        worst = max(worst, float(distances.min(axis=1).max()))
    return worst


def hausdorff_distance(a, b, chunk: int = 1024) -> float:
    """Symmetric Euclidean Hausdorff distance between two point sets (one point per row)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"Point sets must be 2D arrays (one point per row), got {a.shape} and {b.shape}")
    if a.size == 0 or b.size == 0:
        raise ValueError("Hausdorff distance needs two non-empty point sets")
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"Point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return max(_directed(a, b, chunk), _directed(b, a, chunk))


def representativeness(
    train: Dataset,
    val: Dataset,
    reference: Dataset,
    max_points: int = 2000,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """
    (d_H(train, reference), d_H(val, reference)) on random subsamples of at
    most `max_points` inputs each. Similar values mean both sets cover the
    reference equally well.
    """
    rng = rng or np.random.default_rng(0)

    def sample(data: Dataset) -> np.ndarray:
        if len(data) <= max_points:
            return data.inputs
        return data.inputs[rng.choice(len(data), size=max_points, replace=False)]

    ref = sample(reference)
    return hausdorff_distance(sample(train), ref), hausdorff_distance(sample(val), ref)


def prepare_splits(config: RunConfig) -> tuple[Dataset, Dataset, Dataset]:
    """
    Load the configured IDX files and split them.

    The training file provides train and validation. The test file, when
    configured, is the test set (its first `test_count` samples, so sample ids
    are positions in that file); otherwise the test set is carved from the pool.
    """
    config.validate_paths()
    data = config.data
    pool = load_idx(data.resolve(data.train_images), data.resolve(data.train_labels))
    if not data.has_test_files:
        return split(pool, config.split)

    train, val, _ = split(pool, config.split.model_copy(update={"test_count": 0}))
    test = load_idx(data.resolve(data.test_images), data.resolve(data.test_labels))
    if config.split.test_count < len(test):
        test = test.subset(np.arange(config.split.test_count))
    return train, val, test
