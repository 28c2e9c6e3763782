"""Atlas construction and the experiments run on top of it."""

from .atlas import (
    DEFAULT_PALETTE,
    AtlasPatterns,
    DensityGrid,
    ExpectedPattern,
    UnitAssignment,
    apply_permutation,
    brainbow,
    build_atlas,
    class_densities,
    class_density,
    estimate_grid,
    expected_activation,
    expected_latent,
    expected_patterns,
    latent_separation,
    nearest_neighbor_agreement,
    pattern_matrix,
    silverman_bandwidth,
    sort_units,
)
from .experiments import (
    AttackCampaign,
    AttackStep,
    AttackTrajectory,
    ClassViolin,
    Constellation,
    LatentTrajectory,
    ViolinReport,
    attack_campaign,
    fgsm_attack,
    noise_accuracy_curve,
    noise_constellation,
    train_with_noise_injection,
    training_trajectories,
    violin_report,
)

__all__ = [
    "DEFAULT_PALETTE",
    "AtlasPatterns",
    "AttackCampaign",
    "AttackStep",
    "AttackTrajectory",
    "ClassViolin",
    "Constellation",
    "DensityGrid",
    "ExpectedPattern",
    "LatentTrajectory",
    "UnitAssignment",
    "ViolinReport",
    "apply_permutation",
    "attack_campaign",
    "brainbow",
    "build_atlas",
    "class_densities",
    "class_density",
    "estimate_grid",
    "expected_activation",
    "expected_latent",
    "expected_patterns",
    "fgsm_attack",
    "latent_separation",
    "nearest_neighbor_agreement",
    "noise_accuracy_curve",
    "noise_constellation",
    "pattern_matrix",
    "silverman_bandwidth",
    "sort_units",
    "train_with_noise_injection",
    "training_trajectories",
    "violin_report",
]
