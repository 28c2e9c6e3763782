"""
Run configuration

A run is described by a RunConfig: data locations, split sizes, the three
training schedules, the atlas grid and the experiment parameters. Configs are
assembled from a preset YAML file shipped in `presets/`, an optional user
YAML file deep-merged on top, and finally CLI overrides.
"""

import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Literal

import numpy as np
import yaml
from pydantic import BaseModel, Field, model_validator

from .settings import settings

logger = logging.getLogger(__name__)

PRESETS_DIR = Path(__file__).parent / "presets"


class TrainConfig(BaseModel):
    """Minibatch Adam with a triangular cyclic learning rate and cycle-end early stopping."""

    cycle_length: int = Field(default=1000, ge=2)  # T
    num_cycles: int = Field(default=10, ge=1)  # N
    lr_min: float = Field(default=0.0, ge=0.0)
    lr_max: float = Field(default=1e-3, ge=0.0)
    lr_max_decay: float = Field(default=1.0, gt=0.0, le=1.0)  # per-cycle factor on lr_max
    batch_size: int = Field(default=128, ge=1)
    patience: int = Field(default=5, ge=1)
    dropout_keep: float = Field(default=0.9, gt=0.0, le=1.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps_hat: float = Field(default=1e-8, gt=0.0)
    seed: int = 0
    precision: Literal["float32", "float64"] = "float32"

    @model_validator(mode="after")
    def _check_lr_range(self) -> "TrainConfig":
        if self.lr_min > self.lr_max:
            raise ValueError(
                f"lr_min ({self.lr_min}) must not exceed lr_max ({self.lr_max})"
            )
        return self

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.precision)


class SplitSpec(BaseModel):
    train_count: int = Field(default=55000, ge=0)
    val_count: int = Field(default=5000, ge=0)
    test_count: int = Field(default=10000, ge=0)
    seed: int = 0


class Architecture(str, Enum):
    """Classifier size: desk-scale default or the full 12x200 network."""

    DESK = "desk"
    FULL = "full"


# (hidden layers, units per layer)
ARCHITECTURES: dict[Architecture, tuple[int, int]] = {
    Architecture.DESK: (6, 128),
    Architecture.FULL: (12, 200),
}


class DataPaths(BaseModel):
    """MNIST IDX files, relative to `directory` unless absolute. `.gz` files are read transparently."""

    directory: Path = Field(default_factory=lambda: settings.data_dir)
    train_images: str = "train-images-idx3-ubyte.gz"
    train_labels: str = "train-labels-idx1-ubyte.gz"
    test_images: str | None = "t10k-images-idx3-ubyte.gz"
    test_labels: str | None = "t10k-labels-idx1-ubyte.gz"

    def resolve(self, name: str | None) -> Path | None:
        if name is None:
            return None
        path = Path(name)
        return path if path.is_absolute() else self.directory / path

    @property
    def has_test_files(self) -> bool:
        return self.test_images is not None and self.test_labels is not None

    def missing(self) -> list[Path]:
        names = [self.train_images, self.train_labels, self.test_images, self.test_labels]
        paths = [self.resolve(name) for name in names if name is not None]
        return [path for path in paths if not path.exists()]


class GridConfig(BaseModel):
    """Truncated latent domain Ω′ = [-extent, extent]² sampled every `step`."""

    extent: float = Field(default=4.0, gt=0.0)
    step: float = Field(default=0.1, gt=0.0)

    @model_validator(mode="after")
    def _check_divisible(self) -> "GridConfig":
        half = self.extent / self.step
        if abs(half - round(half)) > 1e-9:
            raise ValueError(
                f"grid extent {self.extent} must be a whole number of steps {self.step}"
            )
        return self

    @property
    def half_nodes(self) -> int:
        return int(round(self.extent / self.step))

    def axis(self) -> np.ndarray:
        """Node coordinates Δz·i, i = -N..N."""
        n = self.half_nodes
        return self.step * np.arange(-n, n + 1, dtype=np.float64)


class ExperimentConfig(BaseModel):
    constellation_sample: int = 907
    constellation_sigmas: list[float] = Field(default_factory=lambda: [0.0, 0.1, 0.2, 0.3])
    constellation_draws: int = Field(default=200, ge=1)
    noise_sigma_max: float = Field(default=1.0, gt=0.0)
    robustness_sigmas: list[float] = Field(
        default_factory=lambda: [0.0, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0]
    )
    fgsm_eps: float = Field(default=0.01, ge=0.0)
    fgsm_steps: int = Field(default=100, ge=0)
    fgsm_continue_after_success: bool = False
    attack_samples: int = Field(default=20, ge=1)
    history_probe: int = Field(default=100, ge=0)


class RunConfig(BaseModel):
    """Everything one pipeline run needs. `seed` is mandatory."""

    seed: int = Field(ge=0)
    output_dir: Path = Field(default_factory=lambda: settings.output_dir)
    data: DataPaths = Field(default_factory=DataPaths)
    split: SplitSpec = Field(default_factory=SplitSpec)
    architecture: Architecture = Architecture.DESK
    hidden_layers: int | None = Field(default=None, ge=1)
    hidden_units: int | None = Field(default=None, ge=1)
    introspector_units: list[int] = Field(default_factory=lambda: [200, 200, 200])
    classifier: TrainConfig = Field(default_factory=TrainConfig)
    autoencoder: TrainConfig = Field(default_factory=TrainConfig)
    estimator: TrainConfig = Field(default_factory=lambda: TrainConfig(batch_size=32))
    mmd_weight: float = Field(default=1.0, ge=0.0)
    kernel_bandwidth_sq: float = Field(default=2.0, gt=0.0)
    error_floor: float = Field(default=1e-8, gt=0.0)
    grid: GridConfig = Field(default_factory=GridConfig)
    experiments: ExperimentConfig = Field(default_factory=ExperimentConfig)
    workers: int = Field(default=1, ge=1)

    @property
    def classifier_shape(self) -> tuple[int, int]:
        layers, units = ARCHITECTURES[self.architecture]
        return self.hidden_layers or layers, self.hidden_units or units

    def component_seed(self, component: str) -> int:
        """Derive a stable per-component seed from the global seed."""
        salt = int.from_bytes(hashlib.sha256(component.encode()).digest()[:4], "little")
        return int(np.random.SeedSequence([self.seed, salt]).generate_state(1)[0])

    def seeded(self) -> "RunConfig":
        """
        Copy where every component seed left unset is derived from the global seed.

        A seed given explicitly in a config file or override is kept as is.
        """
        update = {}
        for component in ("split", "classifier", "autoencoder", "estimator"):
            part = getattr(self, component)
            if "seed" not in part.model_fields_set:
                update[component] = part.model_copy(update={"seed": self.component_seed(component)})
        return self.model_copy(update=update)

    def validate_paths(self) -> None:
        missing = self.data.missing()
        if missing:
            raise FileNotFoundError(
                "Missing dataset files: "
                + ", ".join(str(path) for path in missing)
                + ". Run 'fetch' or fix data.directory in the config."
            )

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# ============================================================================
# LOAD PRESETS AND CONFIG FILES
# ============================================================================


def _load_presets() -> dict[str, dict[str, Any]]:
    """Load all preset YAML files in the presets directory"""
    presets: dict[str, dict[str, Any]] = {}
    for yaml_file in sorted(PRESETS_DIR.glob("*.yaml")):
        with open(yaml_file, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"Preset {yaml_file} must contain a mapping")
        presets[yaml_file.stem] = data
    return presets


PRESETS: dict[str, dict[str, Any]] = _load_presets()


def list_presets() -> list[str]:
    return list(PRESETS.keys())


def deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(
    path: Path | None = None,
    preset: str | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """
    Build a RunConfig from a preset, a YAML file and explicit overrides (in that order).

    The preset defaults to the one named in the file's `preset` key, then `desk`.
    """
    user: dict[str, Any] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as f:
            user = yaml.safe_load(f) or {}
        if not isinstance(user, dict):
            raise ValueError(f"Config file {path} must contain a mapping")

    preset_name = preset or user.pop("preset", None) or "desk"
    user.pop("preset", None)
    if preset_name not in PRESETS:
        raise ValueError(
            f"Unknown preset '{preset_name}'. Must be one of: {list_presets()}"
        )

    merged = deep_merge(PRESETS[preset_name], user)
    merged = deep_merge(merged, overrides or {})
    config = RunConfig.model_validate(merged)
    logger.debug(f"Loaded run config (preset={preset_name}, hash={config.config_hash()[:12]})")
    return config
