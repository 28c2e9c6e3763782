"""Tests for CSV and SVG export"""

import csv

import numpy as np
import pytest

from self_introspection.analysis import build_atlas
from self_introspection.artifacts import (
    SvgCanvas,
    export_brainbow_svg,
    export_container,
    export_patterns,
    export_scatter,
    hex_color,
    save_model,
    write_csv,
)
from self_introspection.config import GridConfig
from self_introspection.models import LatentPoint, encode_batch

POINTS = [
    (LatentPoint(0.0, 0.0), 0, None),
    (LatentPoint(1.0, -1.0), 3, None),
    (LatentPoint(-2.0, 2.5), 9, "misclassified"),
]


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestScatter:
    """Latent scatter plots"""

    def test_one_circle_per_point(self, tmp_path):
        svg = export_scatter(tmp_path / "scatter.svg", POINTS).read_text()
        assert svg.count("<circle") == 3
        assert "<polyline" not in svg
        assert svg.startswith("<?xml")
        assert svg.rstrip().endswith("</svg>")

    def test_heatmap_rect_per_node(self, tmp_path):
        axis = GridConfig(extent=1.0, step=0.25).axis()
        values = np.arange(axis.size**2, dtype=float).reshape(axis.size, axis.size)
        svg = export_scatter(tmp_path / "heat.svg", POINTS, extent=1.0, heatmap=(axis, values)).read_text()
        assert svg.count('class="heat"') == 81

    def test_trajectories(self, tmp_path):
        paths = [np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 1.0]]), np.array([[0.5, 0.5]])]
        svg = export_scatter(tmp_path / "traj.svg", POINTS, trajectories=paths).read_text()
        assert svg.count("<polyline") == 1

    def test_empty(self, tmp_path):
        with pytest.raises(ValueError):
            export_scatter(tmp_path / "empty.svg", [])

    def test_canvas_elements(self, tmp_path):
        canvas = SvgCanvas(100, 50)
        canvas.circle(10, 10, 2, "#ff0000")
        canvas.text(5, 5, "hello")
        text = canvas.save(tmp_path / "c.svg").read_text()
        assert 'width="100" height="50"' in text
        assert "hello" in text


class TestColors:
    def test_hex(self):
        assert hex_color((1.0, 0.0, 0.0)) == "#ff0000"
        assert hex_color((0.5, 0.5, 0.5)) == "#808080"
        assert hex_color((2.0, -1.0, 0.0)) == "#ff0000"


class TestCsv:
    def test_write_csv(self, tmp_path):
        path = write_csv(tmp_path / "sub" / "t.csv", ("a", "b"), [(1, 2.5), (3, None)])
        assert read_rows(path) == [["a", "b"], ["1", "2.5"], ["3", ""]]


class TestArtifactExport:
    """Exporting stored artifacts"""

    def test_brainbow_units(self, tmp_path):
        colors = np.tile([0.2, 0.4, 0.6], (7, 1))
        svg = export_brainbow_svg(tmp_path / "b.svg", colors, [3, 4]).read_text()
        assert svg.count('class="unit"') == 7

    def test_classifier_history(self, stack, tmp_path):
        path = save_model(stack.classifier, tmp_path / "classifier.sint")
        (written,) = export_container(path, tmp_path / "out")
        rows = read_rows(written)
        assert rows[0] == ["cycle", "train_error", "val_error", "test_accuracy"]
        assert len(rows) == len(stack.classifier.history) + 1

    def test_records(self, stack, tmp_path):
        path = save_model(stack.test_records, tmp_path / "records_test.sint")
        (written,) = export_container(path, tmp_path / "out")
        rows = read_rows(written)
        assert rows[0] == ["sample_id", "y_true", "predicted", "e", "cycle"]
        assert len(rows) == len(stack.test_records) + 1

    def test_patterns(self, stack, tmp_path):
        latents = encode_batch(stack.autoencoder, stack.records.h)
        atlas = build_atlas(
            stack.autoencoder, latents, stack.records.y_true, GridConfig(extent=10.0, step=0.5),
            stack.classifier.hidden_widths,
        )
        written = export_patterns(atlas, tmp_path, "atlas")
        names = sorted(p.name for p in written)
        assert names == [
            "atlas_assignment.csv",
            "atlas_brainbow.csv",
            "atlas_brainbow.svg",
            "atlas_brainbow_sorted.svg",
            "atlas_class_shares.csv",
            "atlas_patterns.csv",
        ]
        patterns = read_rows(tmp_path / "atlas_patterns.csv")
        assert len(patterns) == 11
        assert len(patterns[0]) == 3 + stack.classifier.n_hidden
        assignment = read_rows(tmp_path / "atlas_assignment.csv")
        assert len(assignment) == 1 + stack.classifier.n_hidden
