"""
Activation atlas analysis.

Class-conditional densities of the latent points are estimated on a square
grid, turned into expected latent points by a Riemann sum and decoded into
expected activation patterns. The patterns assign every hidden unit to the
class it responds to most, which drives both the layer reordering and the
brainbow colouring.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from ..config import GridConfig
from ..datasets import N_CLASSES
from ..engine import Params
from ..errors import ShapeError
from ..models import (
    AutoencoderModel,
    ClassifierModel,
    EstimatorModel,
    LatentPoint,
    decode,
    destandardize,
    estimate_batch,
)

logger = logging.getLogger(__name__)

MIN_POINTS = 10
BANDWIDTH_FLOOR = 1e-3

# One colour per digit class, RGB in [0, 1]
DEFAULT_PALETTE = np.array(
    [
        [0.122, 0.467, 0.706],
        [1.000, 0.498, 0.055],
        [0.173, 0.627, 0.173],
        [0.839, 0.153, 0.157],
        [0.580, 0.404, 0.741],
        [0.549, 0.337, 0.294],
        [0.890, 0.467, 0.761],
        [0.498, 0.498, 0.498],
        [0.737, 0.741, 0.133],
        [0.090, 0.745, 0.812],
    ]
)


@dataclass
class DensityGrid:
    """f(z | class) sampled at z_ij = (axis[i], axis[j]); values sum to 1 / step^2."""

    axis: np.ndarray
    step: float
    values: np.ndarray
    label: int | None
    mass: float  # Riemann mass before renormalization
    bandwidth: tuple[float, float]

    @property
    def extent(self) -> float:
        return float(self.axis[-1])

    @property
    def resolution(self) -> int:
        return self.axis.shape[0]

    def riemann_sum(self) -> float:
        return float(self.values.sum() * self.step**2)


def silverman_bandwidth(latents: np.ndarray) -> tuple[float, float]:
    """Per-axis rule of thumb for a 2D Gaussian kernel: sigma_d * n^(-1/6)."""
    n = latents.shape[0]
    sigma = latents.std(axis=0, ddof=1)
    width = np.maximum(sigma * n ** (-1.0 / 6.0), BANDWIDTH_FLOOR)
    return float(width[0]), float(width[1])


def class_density(
    latents,
    grid: GridConfig,
    bandwidth: tuple[float, float] | float | None = None,
    label: int | None = None,
) -> DensityGrid:
    """Product-Gaussian KDE of one class's latent points, renormalized over the grid."""
    latents = np.asarray(latents, dtype=np.float64)
    if latents.ndim != 2 or latents.shape[1] != 2:
        raise ShapeError(f"Expected an (n, 2) array of latent points, got {latents.shape}")
    if latents.shape[0] < MIN_POINTS:
        raise ValueError(
            f"Class {label} has {latents.shape[0]} latent points; at least {MIN_POINTS} are needed"
        )
    if bandwidth is None:
        bandwidth = silverman_bandwidth(latents)
    elif np.isscalar(bandwidth):
        bandwidth = (float(bandwidth), float(bandwidth))
    bx, by = bandwidth

    axis = grid.axis()
    kx = np.exp(-0.5 * ((axis[:, None] - latents[None, :, 0]) / bx) ** 2)
    ky = np.exp(-0.5 * ((axis[:, None] - latents[None, :, 1]) / by) ** 2)
    values = (kx @ ky.T) / (latents.shape[0] * 2.0 * np.pi * bx * by)

    mass = float(values.sum() * grid.step**2)
    if not np.isfinite(mass) or mass <= 1e-300:
        raise ValueError(f"Class {label} places no density mass inside the grid")
    if mass < 0.95:
        logger.warning(f"Only {mass:.3f} of class {label}'s density lies inside the grid")
    return DensityGrid(axis, grid.step, values / mass, label, mass, (bx, by))


def class_densities(latents, labels, grid: GridConfig, n_classes: int = N_CLASSES) -> list[DensityGrid]:
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    return [class_density(latents[labels == k], grid, label=k) for k in range(n_classes)]


def expected_latent(density: DensityGrid) -> LatentPoint:
    """Riemann sum of z * f(z) * step^2 over the grid."""
    weights = density.values * density.step**2
    z1 = float(np.sum(density.axis * weights.sum(axis=1)))
    z2 = float(np.sum(density.axis * weights.sum(axis=0)))
    return LatentPoint(z1, z2)


def expected_activation(vae: AutoencoderModel, e_z) -> np.ndarray:
    """Decoded expected latent, in raw activation units."""
    return destandardize(vae, decode(vae, np.asarray(e_z, dtype=np.float64)))


@dataclass(frozen=True)
class ExpectedPattern:
    label: int
    e_z: LatentPoint
    e_h: np.ndarray


def expected_patterns(vae: AutoencoderModel, densities: list[DensityGrid]) -> list[ExpectedPattern]:
    patterns = []
    for k, density in enumerate(densities):
        e_z = expected_latent(density)
        e_h = expected_activation(vae, e_z)
        if not np.all(np.isfinite(e_h)):
            raise ValueError(f"Expected activation of class {k} is not finite")
        patterns.append(ExpectedPattern(k if density.label is None else density.label, e_z, e_h))
    return patterns


def pattern_matrix(patterns: list[ExpectedPattern]) -> np.ndarray:
    """K x N_h matrix of expected activations, rows ordered by class."""
    ordered = sorted(patterns, key=lambda p: p.label)
    if [p.label for p in ordered] != list(range(len(ordered))):
        raise ValueError("Patterns must cover classes 0..K-1 exactly once")
    return np.stack([np.asarray(p.e_h, dtype=np.float64) for p in ordered])


# ============================================================================
# UNIT SORTING
# ============================================================================


@dataclass
class UnitAssignment:
    """
    `dominant[i]` is the class unit i (original order) responds to most;
    `permutations[l][new] = old` regroups the units of hidden layer l.
    """

    dominant: np.ndarray
    permutations: list[np.ndarray]
    layer_widths: list[int]

    def __post_init__(self):
        if len(self.permutations) != len(self.layer_widths):
            raise ValueError("One permutation per hidden layer is required")
        for l, (perm, width) in enumerate(zip(self.permutations, self.layer_widths)):
            perm = np.asarray(perm)
            if perm.shape != (width,) or not np.array_equal(np.sort(perm), np.arange(width)):
                raise ValueError(f"Permutation of layer {l} is not a bijection on {width} units")
        if self.dominant.shape != (sum(self.layer_widths),):
            raise ShapeError("dominant must have one entry per hidden unit")

    @classmethod
    def identity(cls, layer_widths: list[int]) -> "UnitAssignment":
        return cls(
            np.zeros(sum(layer_widths), dtype=np.int64),
            [np.arange(w) for w in layer_widths],
            list(layer_widths),
        )

    def _offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.layer_widths)[:-1]]).astype(np.int64)

    def global_order(self) -> np.ndarray:
        """Original indices of the concatenated units, in their new order."""
        return np.concatenate(
            [offset + perm for offset, perm in zip(self._offsets(), self.permutations)]
        )

    def inverse(self) -> "UnitAssignment":
        """Undoes this assignment on an already reordered network."""
        inverse_perms = [np.argsort(perm) for perm in self.permutations]
        return UnitAssignment(self.dominant[self.global_order()], inverse_perms, self.layer_widths)

    def class_shares(self, n_classes: int = N_CLASSES) -> np.ndarray:
        """Fraction of each layer's units assigned to each class (layers x classes)."""
        shares = []
        for offset, width in zip(self._offsets(), self.layer_widths):
            counts = np.bincount(self.dominant[offset : offset + width], minlength=n_classes)
            shares.append(counts / width)
        return np.array(shares)


def sort_units(patterns: list[ExpectedPattern], layer_widths: list[int]) -> UnitAssignment:
    """
    Assign unit i to argmax_k E[h_i | class k] (lowest class on ties) and group
    each layer's units by class, strongest response first within a class.
    """
    expected = pattern_matrix(patterns)
    if expected.shape[1] != sum(layer_widths):
        raise ShapeError(
            f"Patterns have {expected.shape[1]} units but layers sum to {sum(layer_widths)}"
        )
    dominant = np.argmax(expected, axis=0)
    strength = expected[dominant, np.arange(expected.shape[1])]

    permutations = []
    offset = 0
    for width in layer_widths:
        block = slice(offset, offset + width)
        permutations.append(np.lexsort((-strength[block], dominant[block])))
        offset += width
    return UnitAssignment(dominant.astype(np.int64), permutations, list(layer_widths))


def apply_permutation(model: ClassifierModel, assignment: UnitAssignment) -> ClassifierModel:
    """Reorder hidden units: rows of W_l and b_l, columns of W_(l+1). The output layer keeps its order."""
    if assignment.layer_widths != model.hidden_widths:
        raise ValueError(
            f"Assignment covers layers {assignment.layer_widths}, model has {model.hidden_widths}"
        )
    weights = list(model.params.weights)
    biases = list(model.params.biases)
    for layer, perm in enumerate(assignment.permutations):
        weights[layer] = weights[layer][perm, :]
        biases[layer] = biases[layer][perm]
        weights[layer + 1] = weights[layer + 1][:, perm]
    return ClassifierModel(model.spec, Params(weights, biases), list(model.history))


# ============================================================================
# BRAINBOW
# ============================================================================


def brainbow(patterns: list[ExpectedPattern], palette=DEFAULT_PALETTE) -> np.ndarray:
    """
    Per-unit colour: class colours mixed with weights max(E[h_i | class k], 0).
    Units with no positive response are mid-gray.
    """
    expected = pattern_matrix(patterns)
    palette = np.asarray(palette, dtype=np.float64)
    if palette.shape != (expected.shape[0], 3):
        raise ValueError(
            f"Palette must hold {expected.shape[0]} RGB colours, got shape {palette.shape}"
        )
    weights = np.maximum(expected, 0.0).T
    total = weights.sum(axis=1, keepdims=True)
    safe = np.where(total > 0, total, 1.0)
    colors = np.where(total > 0, (weights @ palette) / safe, 0.5)
    return np.clip(colors, 0.0, 1.0)


# ============================================================================
# ATLAS DIAGNOSTICS
# ============================================================================


def estimate_grid(est: EstimatorModel, grid: GridConfig) -> np.ndarray:
    """Estimated log10 error at every grid node, indexed [i, j] like DensityGrid.values."""
    axis = grid.axis()
    z1, z2 = np.meshgrid(axis, axis, indexing="ij")
    nodes = np.column_stack([z1.ravel(), z2.ravel()])
    return estimate_batch(est, nodes).reshape(axis.shape[0], axis.shape[0])


def latent_separation(
    latents, labels, max_points: int = 2000, rng: np.random.Generator | None = None
) -> tuple[float, float]:
    """Median within-class and median between-class pairwise latent distance."""
    latents = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(labels)
    if latents.shape[0] > max_points:
        keep = (rng or np.random.default_rng(0)).choice(latents.shape[0], max_points, replace=False)
        latents, labels = latents[keep], labels[keep]
    distances = pdist(latents)
    # pdist's condensed order is the row-major upper triangle
    same = (labels[:, None] == labels[None, :])[np.triu_indices(labels.shape[0], k=1)]
    if not same.any() or same.all():
        raise ValueError("Need at least two classes with two points each")
    return float(np.median(distances[same])), float(np.median(distances[~same]))


def nearest_neighbor_agreement(reference, reference_labels, query, query_labels) -> float:
    """Fraction of query points whose nearest reference latent has the same label."""
    reference = np.asarray(reference, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    nearest = np.concatenate(
        [cdist(query[start : start + 1024], reference).argmin(axis=1) for start in range(0, query.shape[0], 1024)]
    )
    return float(np.mean(np.asarray(reference_labels)[nearest] == np.asarray(query_labels)))


@dataclass
class AtlasPatterns:
    """Everything the `atlas` stage produces, stored together as one artifact."""

    densities: list[DensityGrid]
    patterns: list[ExpectedPattern]
    assignment: UnitAssignment
    colors: np.ndarray  # brainbow RGB per hidden unit, original order


def build_atlas(
    vae: AutoencoderModel,
    latents,
    labels,
    grid: GridConfig,
    layer_widths: list[int],
    palette=DEFAULT_PALETTE,
) -> AtlasPatterns:
    densities = class_densities(latents, labels, grid, n_classes=len(palette))
    patterns = expected_patterns(vae, densities)
    return AtlasPatterns(
        densities, patterns, sort_units(patterns, layer_widths), brainbow(patterns, palette)
    )
