"""Tests for presets, run configuration loading and seeding"""

import pytest
import yaml
from pydantic import ValidationError

from self_introspection.config import (
    Architecture,
    GridConfig,
    RunConfig,
    TrainConfig,
    deep_merge,
    list_presets,
    load_run_config,
)


class TestPresets:
    """Shipped presets"""

    def test_available(self):
        assert {"desk", "full"} <= set(list_presets())

    def test_desk_is_default(self):
        config = load_run_config(overrides={"seed": 1})
        assert config.architecture is Architecture.DESK
        assert config.classifier_shape == (6, 128)
        assert config.classifier.lr_max == pytest.approx(1e-3)

    def test_full_schedules(self):
        config = load_run_config(preset="full", overrides={"seed": 1})
        assert config.classifier_shape == (12, 200)
        assert config.estimator.cycle_length == 10000
        assert config.estimator.num_cycles == 50
        assert config.estimator.batch_size == 32
        assert config.classifier.lr_max == pytest.approx(1e-5)
        assert config.split.train_count == 55000

    def test_unknown_preset(self):
        with pytest.raises(ValueError):
            load_run_config(preset="laptop", overrides={"seed": 1})


class TestLoading:
    """Merging presets, files and overrides"""

    def test_seed_required(self):
        with pytest.raises(ValidationError):
            load_run_config()

    def test_negative_seed(self):
        with pytest.raises(ValidationError):
            load_run_config(overrides={"seed": -1})

    def test_file_and_overrides(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            yaml.safe_dump(
                {"preset": "full", "seed": 4, "classifier": {"num_cycles": 2}, "hidden_units": 16}
            )
        )
        config = load_run_config(path, overrides={"classifier": {"batch_size": 8}})
        assert config.seed == 4
        assert config.classifier.num_cycles == 2
        assert config.classifier.batch_size == 8
        assert config.classifier.cycle_length == 3000
        assert config.classifier_shape == (12, 16)

    def test_explicit_preset_wins_over_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"preset": "full", "seed": 0}))
        assert load_run_config(path, preset="desk").architecture is Architecture.DESK

    def test_file_must_be_mapping(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ValueError):
            load_run_config(path)

    def test_deep_merge(self):
        merged = deep_merge({"a": {"b": 1, "c": 2}, "d": 3}, {"a": {"c": 5}})
        assert merged == {"a": {"b": 1, "c": 5}, "d": 3}


class TestValidation:
    """Field constraints"""

    def test_lr_range(self):
        with pytest.raises(ValidationError):
            TrainConfig(lr_min=1e-2, lr_max=1e-3)

    def test_cycle_length(self):
        with pytest.raises(ValidationError):
            TrainConfig(cycle_length=1)

    def test_grid_axis(self):
        axis = GridConfig().axis()
        assert axis.shape == (81,)
        assert axis[0] == pytest.approx(-4.0)
        assert axis[40] == 0.0

    def test_grid_must_divide(self):
        with pytest.raises(ValidationError):
            GridConfig(extent=1.0, step=0.3)


class TestSeeding:
    """Per-component seeds derived from the global seed"""

    def test_component_seeds(self):
        config = RunConfig(seed=3)
        assert config.component_seed("classifier") == RunConfig(seed=3).component_seed("classifier")
        assert config.component_seed("classifier") != config.component_seed("autoencoder")
        assert config.component_seed("classifier") != RunConfig(seed=4).component_seed("classifier")

    def test_seeded_copy(self):
        config = RunConfig(seed=3)
        seeded = config.seeded()
        assert seeded.classifier.seed == config.component_seed("classifier")
        assert seeded.split.seed == config.component_seed("split")
        assert config.classifier.seed == 0

    def test_explicit_component_seed_kept(self):
        config = load_run_config(
            overrides={"seed": 3, "classifier": {"seed": 42}, "split": {"seed": 9}}
        )
        seeded = config.seeded()
        assert seeded.classifier.seed == 42
        assert seeded.split.seed == 9
        assert seeded.autoencoder.seed == config.component_seed("autoencoder")
        assert seeded.estimator.seed == config.component_seed("estimator")

    def test_seeded_is_idempotent(self):
        once = RunConfig(seed=5).seeded()
        assert once.seeded() == once

    def test_config_hash(self):
        assert RunConfig(seed=1).config_hash() == RunConfig(seed=1).config_hash()
        assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()
