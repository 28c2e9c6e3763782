"""Tests for class densities, expected patterns, unit sorting and brainbow colours"""

import logging

import numpy as np
import pytest

from self_introspection.analysis import (
    DEFAULT_PALETTE,
    ExpectedPattern,
    UnitAssignment,
    apply_permutation,
    brainbow,
    build_atlas,
    class_density,
    estimate_grid,
    expected_latent,
    latent_separation,
    nearest_neighbor_agreement,
    silverman_bandwidth,
    sort_units,
)
from self_introspection.config import GridConfig
from self_introspection.errors import ShapeError
from self_introspection.models import (
    LatentPoint,
    encode_batch,
    estimate_error,
    predict,
    record_activations,
)

GRID = GridConfig(extent=4.0, step=0.1)


def patterns_from(matrix) -> list[ExpectedPattern]:
    matrix = np.asarray(matrix, dtype=np.float64)
    return [ExpectedPattern(k, LatentPoint(0.0, 0.0), row) for k, row in enumerate(matrix)]


class TestClassDensity:
    """Kernel density on the latent grid"""

    def test_point_mass_expectation(self):
        points = np.tile([1.0, 0.0], (10, 1))
        density = class_density(points, GRID, bandwidth=0.2)
        e_z = expected_latent(density)
        assert e_z.z1 == pytest.approx(1.0, abs=1e-9)
        assert e_z.z2 == pytest.approx(0.0, abs=1e-9)

    def test_symmetric_points_center_at_origin(self):
        corners = np.array([[1.0, 2.0], [-1.0, 2.0], [1.0, -2.0], [-1.0, -2.0]])
        density = class_density(np.tile(corners, (3, 1)), GRID)
        e_z = expected_latent(density)
        assert e_z.z1 == pytest.approx(0.0, abs=1e-12)
        assert e_z.z2 == pytest.approx(0.0, abs=1e-12)

    def test_expectation_tracks_sample_mean(self, rng):
        points = rng.normal(loc=(0.5, -1.0), scale=0.5, size=(400, 2))
        e_z = expected_latent(class_density(points, GRID))
        mean = points.mean(axis=0)
        assert np.hypot(e_z.z1 - mean[0], e_z.z2 - mean[1]) <= 0.1

    def test_riemann_sum_is_one(self, rng):
        density = class_density(rng.normal(size=(50, 2)), GRID)
        assert density.riemann_sum() == pytest.approx(1.0, abs=1e-9)
        assert density.resolution == 81
        assert density.extent == pytest.approx(4.0)

    def test_node_value_matches_direct_kernel_sum(self, rng):
        points = rng.normal(size=(20, 2))
        bx, by = 0.4, 0.3
        density = class_density(points, GRID, bandwidth=(bx, by))
        i, j = 45, 32
        z = np.array([GRID.axis()[i], GRID.axis()[j]])
        direct = np.sum(
            np.exp(-0.5 * ((z[0] - points[:, 0]) / bx) ** 2 - 0.5 * ((z[1] - points[:, 1]) / by) ** 2)
        ) / (20 * 2 * np.pi * bx * by)
        assert density.values[i, j] * density.mass == pytest.approx(direct, rel=1e-10)

    def test_too_few_points(self, rng):
        with pytest.raises(ValueError):
            class_density(rng.normal(size=(9, 2)), GRID, label=3)

    def test_wrong_shape(self, rng):
        with pytest.raises(ShapeError):
            class_density(rng.normal(size=(20, 3)), GRID)

    def test_mass_outside_grid_warns(self, caplog):
        points = np.tile([3.9, 0.0], (10, 1))
        with caplog.at_level(logging.WARNING):
            density = class_density(points, GRID, bandwidth=0.5)
        assert density.mass < 0.95
        assert "inside the grid" in caplog.text

    def test_no_mass_inside_grid(self):
        with pytest.raises(ValueError):
            class_density(np.tile([100.0, 100.0], (10, 1)), GRID, bandwidth=0.1)

    def test_silverman_floor(self):
        assert silverman_bandwidth(np.zeros((10, 2))) == (1e-3, 1e-3)


class TestSortUnits:
    """Assigning units to classes and grouping them per layer"""

    def test_one_hot_pattern(self):
        matrix = np.zeros((10, 3))
        matrix[7, 1] = 1.0
        matrix[2, 0] = 0.5
        matrix[2, 2] = 0.1
        assignment = sort_units(patterns_from(matrix), [3])
        assert assignment.dominant.tolist() == [2, 7, 2]
        # class 2 first (strongest first), then class 7
        assert assignment.permutations[0].tolist() == [0, 2, 1]

    def test_ties_go_to_lowest_class(self):
        assignment = sort_units(patterns_from(np.ones((10, 4))), [2, 2])
        assert assignment.dominant.tolist() == [0, 0, 0, 0]
        assert [p.tolist() for p in assignment.permutations] == [[0, 1], [0, 1]]

    def test_layers_sorted_independently(self):
        matrix = np.zeros((10, 4))
        matrix[5, 0] = matrix[1, 1] = matrix[9, 2] = matrix[0, 3] = 1.0
        assignment = sort_units(patterns_from(matrix), [2, 2])
        assert [p.tolist() for p in assignment.permutations] == [[1, 0], [1, 0]]
        assert assignment.global_order().tolist() == [1, 0, 3, 2]

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            sort_units(patterns_from(np.ones((10, 4))), [3])

    def test_patterns_must_cover_classes(self):
        patterns = patterns_from(np.ones((10, 2)))[1:]
        with pytest.raises(ValueError):
            sort_units(patterns, [2])

    def test_permutation_must_be_bijection(self):
        with pytest.raises(ValueError):
            UnitAssignment(np.zeros(3, np.int64), [np.array([0, 0, 1])], [3])

    def test_class_shares(self):
        assignment = UnitAssignment(np.array([1, 1, 3, 0]), [np.arange(2), np.arange(2)], [2, 2])
        shares = assignment.class_shares()
        assert shares.shape == (2, 10)
        assert shares[0, 1] == 1.0
        assert shares[1, 3] == 0.5 and shares[1, 0] == 0.5


def random_assignment(widths, seed=0) -> UnitAssignment:
    rng = np.random.default_rng(seed)
    return UnitAssignment(
        rng.integers(0, 10, size=sum(widths)), [rng.permutation(w) for w in widths], list(widths)
    )


class TestApplyPermutation:
    """Reordering hidden units keeps the function"""

    def test_identity(self, stack):
        model = stack.classifier
        same = apply_permutation(model, UnitAssignment.identity(model.hidden_widths))
        assert same.params.equals(model.params)

    def test_outputs_unchanged(self, stack):
        model = stack.classifier
        permuted = apply_permutation(model, random_assignment(model.hidden_widths))
        _, before = predict(model, stack.test.inputs)
        _, after = predict(permuted, stack.test.inputs)
        assert np.max(np.abs(before - after)) < 1e-5

    def test_inverse_restores_exactly(self, stack):
        model = stack.classifier
        assignment = random_assignment(model.hidden_widths, seed=3)
        restored = apply_permutation(apply_permutation(model, assignment), assignment.inverse())
        assert restored.params.equals(model.params)

    def test_hidden_units_follow_permutation(self, stack):
        model = stack.classifier
        assignment = random_assignment(model.hidden_widths, seed=4)
        permuted = apply_permutation(model, assignment)
        original = record_activations(model, stack.test.inputs[:5], stack.test.labels[:5])
        reordered = record_activations(permuted, stack.test.inputs[:5], stack.test.labels[:5])
        assert np.allclose(reordered.h, original.h[:, assignment.global_order()], atol=1e-5)

    def test_layer_mismatch(self, stack):
        with pytest.raises(ValueError):
            apply_permutation(stack.classifier, UnitAssignment.identity([3]))


class TestBrainbow:
    """Unit colours mixed from class colours"""

    def test_single_class_response(self):
        matrix = np.zeros((10, 1))
        matrix[4, 0] = 2.0
        colors = brainbow(patterns_from(matrix))
        assert np.allclose(colors[0], DEFAULT_PALETTE[4])

    def test_uniform_response_is_palette_mean(self):
        colors = brainbow(patterns_from(np.ones((10, 2))))
        assert np.allclose(colors, DEFAULT_PALETTE.mean(axis=0))

    def test_two_class_mix(self):
        palette = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        colors = brainbow(patterns_from([[1.0], [3.0]]), palette)
        assert colors[0].tolist() == pytest.approx([0.25, 0.0, 0.75])

    def test_negative_responses_ignored(self):
        palette = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        colors = brainbow(patterns_from([[-5.0, -1.0], [2.0, -1.0]]), palette)
        assert colors[0].tolist() == pytest.approx([0.0, 0.0, 1.0])
        assert colors[1].tolist() == pytest.approx([0.5, 0.5, 0.5])

    def test_palette_mismatch(self):
        with pytest.raises(ValueError):
            brainbow(patterns_from(np.ones((10, 2))), DEFAULT_PALETTE[:9])


class TestAtlasDiagnostics:
    """Estimator heat map and latent cluster checks"""

    def test_estimate_grid(self, stack):
        grid = GridConfig(extent=1.0, step=0.5)
        heat = estimate_grid(stack.estimator, grid)
        assert heat.shape == (5, 5)
        expected = estimate_error(stack.estimator, np.array([grid.axis()[1], grid.axis()[3]]))
        assert heat[1, 3] == pytest.approx(expected, rel=1e-5)

    def test_separation(self, rng):
        a = rng.normal(size=(30, 2)) * 0.1
        b = rng.normal(size=(30, 2)) * 0.1 + 5.0
        within, between = latent_separation(np.vstack([a, b]), [0] * 30 + [1] * 30)
        assert within < 1.0 < between

    def test_separation_needs_two_classes(self, rng):
        with pytest.raises(ValueError):
            latent_separation(rng.normal(size=(5, 2)), [0] * 5)

    def test_nearest_neighbor_agreement(self, rng):
        points = rng.normal(size=(20, 2))
        labels = rng.integers(0, 10, size=20)
        assert nearest_neighbor_agreement(points, labels, points, labels) == 1.0


class TestBuildAtlas:
    """End to end on the trained blob models"""

    def test_build(self, stack):
        latents = encode_batch(stack.autoencoder, stack.records.h)
        atlas = build_atlas(
            stack.autoencoder,
            latents,
            stack.records.y_true,
            GridConfig(extent=10.0, step=0.25),
            stack.classifier.hidden_widths,
        )
        assert len(atlas.densities) == len(atlas.patterns) == 10
        assert atlas.colors.shape == (stack.classifier.n_hidden, 3)
        assert atlas.assignment.layer_widths == [12, 12]
        assert all(d.riemann_sum() == pytest.approx(1.0, abs=1e-9) for d in atlas.densities)
        assert all(p.e_h.shape == (stack.classifier.n_hidden,) for p in atlas.patterns)
