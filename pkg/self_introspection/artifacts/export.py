"""
CSV tables and SVG figures for stored artifacts.

The SVG writer collects elements and emits an SVG 1.1 document; data
coordinates of the latent square [-extent, extent]^2 are mapped onto the
canvas with z2 pointing up.
"""

import csv
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..analysis import DEFAULT_PALETTE, AtlasPatterns
from ..models import ActivationRecords, AutoencoderModel, ClassifierModel, EstimatorModel, LatentPoint
from .container import load_model

logger = logging.getLogger(__name__)

PREAMBLE = """\
<?xml version="1.0" standalone="no"?>
<!DOCTYPE svg PUBLIC "-//W3C//DTD SVG 1.1//EN"
"http://www.w3.org/Graphics/SVG/1.1/DTD/svg11.dtd">
<svg width="%(width)d" height="%(height)d" viewBox="0 0 %(width)d %(height)d" version="1.1"
    xmlns="http://www.w3.org/2000/svg">
<rect x="0" y="0" width="%(width)d" height="%(height)d" style="fill:#ffffff"/>
"""

POSTAMBLE = "</svg>\n"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    logger.info(f"Wrote {path}")
    return path


def hex_color(rgb) -> str:
    r, g, b = (int(round(float(c) * 255)) for c in np.clip(rgb, 0.0, 1.0))
    return f"#{r:02x}{g:02x}{b:02x}"


def _heat_color(value: float) -> str:
    """White for low estimated error, dark red for high (value in [0, 1])."""
    return hex_color((1.0, 1.0 - 0.8 * value, 1.0 - 0.8 * value))


class SvgCanvas:
    def __init__(self, width: int = 600, height: int = 600):
        self.width = width
        self.height = height
        self.commands: list[str] = []

    def save(self, filename: Path) -> Path:
        filename = Path(filename)
        filename.parent.mkdir(parents=True, exist_ok=True)
        with open(filename, "w", encoding="utf-8") as f:
            f.write(PREAMBLE % {"width": self.width, "height": self.height})
            for item in self.commands:
                f.write(item + "\n")
            f.write(POSTAMBLE)
        logger.info(f"Wrote {filename}")
        return filename

    def circle(self, x: float, y: float, radius: float, fill: str, stroke: str = "none"):
        self.commands.append(
            f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius:.2f}" '
            f'style="fill:{fill};stroke:{stroke};stroke-width:1"/>'
        )

    def polyline(self, points: Sequence[tuple[float, float]], color: str = "#000000", width: float = 1.0):
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        self.commands.append(
            f'<polyline points="{coords}" style="fill:none;stroke:{color};stroke-width:{width}"/>'
        )

    def line(self, x1: float, y1: float, x2: float, y2: float, color: str = "#000000"):
        self.commands.append(
            f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
            f'style="stroke:{color};stroke-width:1"/>'
        )

    def rect(self, x: float, y: float, width: float, height: float, fill: str, css_class: str):
        self.commands.append(
            f'<rect class="{css_class}" x="{x:.2f}" y="{y:.2f}" width="{width:.2f}" '
            f'height="{height:.2f}" style="fill:{fill};stroke:none"/>'
        )

    def text(self, x: float, y: float, content: str, size: int = 12):
        self.commands.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" font-size="{size}">{content}</text>'
        )


@dataclass
class LatentFrame:
    """Maps latent coordinates in [-extent, extent]^2 onto a square plot area."""

    extent: float
    size: float = 520.0
    margin: float = 40.0

    def x(self, z1: float) -> float:
        return self.margin + (z1 + self.extent) / (2 * self.extent) * self.size

    def y(self, z2: float) -> float:
        return self.margin + (self.extent - z2) / (2 * self.extent) * self.size


def _draw_axes(canvas: SvgCanvas, frame: LatentFrame):
    lo, hi = -frame.extent, frame.extent
    canvas.line(frame.x(lo), frame.y(0), frame.x(hi), frame.y(0), "#888888")
    canvas.line(frame.x(0), frame.y(lo), frame.x(0), frame.y(hi), "#888888")
    canvas.line(frame.x(lo), frame.y(lo), frame.x(hi), frame.y(lo))
    canvas.line(frame.x(lo), frame.y(lo), frame.x(lo), frame.y(hi))
    canvas.text(frame.x(hi) - 16, frame.y(lo) + 16, "z1")
    canvas.text(frame.x(lo) - 28, frame.y(hi) + 4, "z2")
    canvas.text(frame.x(lo), frame.y(lo) + 16, f"{lo:g}", 10)
    canvas.text(frame.x(hi) - 10, frame.y(lo) + 28, f"{hi:g}", 10)


def export_scatter(
    path: Path,
    points: Sequence[tuple[LatentPoint, int, str | None]],
    *,
    extent: float = 4.0,
    heatmap: tuple[np.ndarray, np.ndarray] | None = None,
    trajectories: Sequence[np.ndarray] = (),
    palette=DEFAULT_PALETTE,
    title: str | None = None,
    radius: float = 2.5,
) -> Path:
    """
    One circle per (latent point, class, marker). A marker draws the circle
    enlarged with a black outline. `heatmap` is (axis, values[i, j]) over the
    atlas grid, drawn underneath as one rect per node.
    """
    if not points:
        raise ValueError("Nothing to plot")
    frame = LatentFrame(extent)
    canvas = SvgCanvas(int(frame.size + 2 * frame.margin), int(frame.size + 2 * frame.margin))

    if heatmap is not None:
        axis, values = heatmap
        values = np.asarray(values, dtype=np.float64)
        lo, hi = float(values.min()), float(values.max())
        scaled = (values - lo) / (hi - lo) if hi > lo else np.zeros_like(values)
        step = float(axis[1] - axis[0]) if len(axis) > 1 else 2 * extent
        cell = step / (2 * extent) * frame.size
        for i, z1 in enumerate(axis):
            for j, z2 in enumerate(axis):
                canvas.rect(
                    frame.x(z1 - step / 2),
                    frame.y(z2 + step / 2),
                    cell,
                    cell,
                    _heat_color(scaled[i, j]),
                    "heat",
                )

    _draw_axes(canvas, frame)
    for trajectory in trajectories:
        trajectory = np.asarray(trajectory)
        if trajectory.shape[0] >= 2:
            canvas.polyline([(frame.x(a), frame.y(b)) for a, b in trajectory], "#333333")

    for z, label, marker in points:
        fill = hex_color(palette[int(label) % len(palette)])
        if marker:
            canvas.circle(frame.x(z[0]), frame.y(z[1]), radius * 2, fill, "#000000")
        else:
            canvas.circle(frame.x(z[0]), frame.y(z[1]), radius, fill)
    if title:
        canvas.text(frame.margin, frame.margin - 16, title, 14)
    return canvas.save(path)


def export_brainbow_svg(path: Path, colors: np.ndarray, layer_widths: Sequence[int], cell: float = 8.0) -> Path:
    """One column per hidden layer, one rect per unit."""
    margin = 20.0
    tallest = max(layer_widths)
    canvas = SvgCanvas(
        int(2 * margin + len(layer_widths) * cell * 3), int(2 * margin + tallest * cell)
    )
    offset = 0
    for layer, width in enumerate(layer_widths):
        x = margin + layer * cell * 3
        for unit in range(width):
            canvas.rect(x, margin + unit * cell, cell * 2, cell, hex_color(colors[offset + unit]), "unit")
        offset += width
    return canvas.save(path)


# ============================================================================
# ARTIFACT EXPORT
# ============================================================================


def _history_rows(history) -> list[tuple]:
    return [(h.cycle, h.train_error, h.val_error, h.test_accuracy) for h in history]


HISTORY_HEADER = ("cycle", "train_error", "val_error", "test_accuracy")


def export_records(records: ActivationRecords, path: Path) -> Path:
    rows = (
        (int(s), int(t), int(p), float(e), int(c))
        for s, t, p, e, c in zip(
            records.sample_ids, records.y_true, records.predicted, records.e, records.cycle
        )
    )
    return write_csv(path, ("sample_id", "y_true", "predicted", "e", "cycle"), rows)


def export_patterns(atlas: AtlasPatterns, out_dir: Path, stem: str) -> list[Path]:
    out_dir = Path(out_dir)
    n_hidden = atlas.patterns[0].e_h.shape[0]
    written = [
        write_csv(
            out_dir / f"{stem}_patterns.csv",
            ("class", "z1", "z2", *(f"h{i}" for i in range(n_hidden))),
            ((p.label, p.e_z.z1, p.e_z.z2, *p.e_h.tolist()) for p in atlas.patterns),
        )
    ]
    rows = []
    offset = 0
    for layer, (perm, width) in enumerate(zip(atlas.assignment.permutations, atlas.assignment.layer_widths)):
        for position, unit in enumerate(perm):
            rows.append((layer, position, int(unit), int(atlas.assignment.dominant[offset + unit])))
        offset += width
    written.append(
        write_csv(out_dir / f"{stem}_assignment.csv", ("layer", "position", "unit", "class"), rows)
    )
    shares = atlas.assignment.class_shares()
    written.append(
        write_csv(
            out_dir / f"{stem}_class_shares.csv",
            ("layer", *(f"class{k}" for k in range(shares.shape[1]))),
            ((layer, *row.tolist()) for layer, row in enumerate(shares)),
        )
    )
    written.append(
        write_csv(
            out_dir / f"{stem}_brainbow.csv",
            ("unit", "r", "g", "b"),
            ((i, *rgb.tolist()) for i, rgb in enumerate(atlas.colors)),
        )
    )
    written.append(
        export_brainbow_svg(out_dir / f"{stem}_brainbow.svg", atlas.colors, atlas.assignment.layer_widths)
    )
    written.append(
        export_brainbow_svg(
            out_dir / f"{stem}_brainbow_sorted.svg",
            atlas.colors[atlas.assignment.global_order()],
            atlas.assignment.layer_widths,
        )
    )
    return written


def export_container(path: Path, out_dir: Path) -> list[Path]:
    """Write the CSV/SVG views of any stored artifact. Returns the files written."""
    component = load_model(path)
    stem = Path(path).stem
    out_dir = Path(out_dir)
    if isinstance(component, (ClassifierModel, AutoencoderModel, EstimatorModel)):
        return [write_csv(out_dir / f"{stem}_history.csv", HISTORY_HEADER, _history_rows(component.history))]
    if isinstance(component, ActivationRecords):
        return [export_records(component, out_dir / f"{stem}.csv")]
    return export_patterns(component, out_dir, stem)
