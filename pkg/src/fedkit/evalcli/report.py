"""CSV and SVG emitters for the cross-silo matrix and accuracy curves.

SVG output is hand-rolled: dependency-free, diffable, deterministic bytes
for identical inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


@dataclass(frozen=True)
class CrossEvalMatrix:
    """Rows: trained models (6 local + centralized + federated).
    Columns: silo test sets. Cells: accuracy in [0, 1]."""

    model_names: tuple[str, ...]
    silo_ids: tuple[str, ...]
    values: np.ndarray  # (len(model_names), len(silo_ids)) float64

    def __post_init__(self):
        expected = (len(self.model_names), len(self.silo_ids))
        if self.values.shape != expected:
            raise ValueError(f"matrix shape {self.values.shape} != {expected}")

    def row_means(self) -> dict[str, float]:
        return {
            name: float(self.values[i].mean()) for i, name in enumerate(self.model_names)
        }

    def cell(self, model: str, silo: str) -> float:
        return float(self.values[self.model_names.index(model), self.silo_ids.index(silo)])


def write_matrix_csv(matrix: CrossEvalMatrix, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["model"] + list(matrix.silo_ids))
        for i, name in enumerate(matrix.model_names):
            writer.writerow([name] + [f"{v:.6f}" for v in matrix.values[i]])


def read_matrix_csv(path: str | Path) -> CrossEvalMatrix:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    silo_ids = tuple(rows[0][1:])
    model_names = tuple(r[0] for r in rows[1:])
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    return CrossEvalMatrix(model_names=model_names, silo_ids=silo_ids, values=values)


def write_curves_csv(curves: dict[str, list[float]], path: str | Path) -> None:
    """Accuracy-vs-round table; one column per trained-model curve."""
    names = list(curves)
    length = max(len(v) for v in curves.values())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["round"] + names)
        for i in range(length):
            row = [str(i + 1)]
            for name in names:
                series = curves[name]
                row.append(f"{series[i]:.6f}" if i < len(series) else "")
            writer.writerow(row)


def read_curves_csv(path: str | Path) -> dict[str, list[float]]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    curves: dict[str, list[float]] = {name: [] for name in names}
    for row in rows[1:]:
        for name, value in zip(names, row[1:]):
            if value:
                curves[name].append(float(value))
    return curves


# Five-stop perceptual ramp (dark violet -> yellow), linear interpolation.
_RAMP = (
    (0.00, (0x44, 0x01, 0x54)),
    (0.25, (0x3B, 0x52, 0x8B)),
    (0.50, (0x21, 0x91, 0x8C)),
    (0.75, (0x5E, 0xC9, 0x62)),
    (1.00, (0xFD, 0xE7, 0x25)),
)


def _ramp_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_RAMP, _RAMP[1:]):
        if v <= t1:
            f = 0.0 if t1 == t0 else (v - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#fde725"


def _text_color(v: float) -> str:
    return "#000000" if v > 0.55 else "#ffffff"


def write_matrix_svg(matrix: CrossEvalMatrix, path: str | Path, title: str = "Accuracy by model and test silo") -> None:
    """Colored heatmap; every matrix cell is a rect with class='cell'."""
    cell_w, cell_h = 86, 40
    left, top = 150, 70
    width = left + cell_w * len(matrix.silo_ids) + 20
    height = top + cell_h * len(matrix.model_names) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{left}" y="28" font-size="16" fill="#000000">{escape(title)}</text>',
    ]
    for j, silo in enumerate(matrix.silo_ids):
        x = left + j * cell_w + cell_w // 2
        parts.append(
            f'<text x="{x}" y="{top - 12}" font-size="12" text-anchor="middle" fill="#000000">{escape(silo)}</text>'
        )
    for i, name in enumerate(matrix.model_names):
        y = top + i * cell_h + cell_h // 2 + 4
        parts.append(
            f'<text x="{left - 10}" y="{y}" font-size="12" text-anchor="end" fill="#000000">{escape(name)}</text>'
        )
        for j in range(len(matrix.silo_ids)):
            v = float(matrix.values[i, j])
            x = left + j * cell_w
            y0 = top + i * cell_h
            parts.append(
                f'<rect class="cell" x="{x}" y="{y0}" width="{cell_w - 2}" height="{cell_h - 2}" '
                f'fill="{_ramp_color(v)}"/>'
            )
            parts.append(
                f'<text x="{x + (cell_w - 2) // 2}" y="{y0 + cell_h // 2 + 4}" font-size="12" '
                f'text-anchor="middle" fill="{_text_color(v)}">{v:.2f}</text>'
            )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


_CURVE_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def write_curves_svg(curves: dict[str, list[float]], path: str | Path,
                     title: str = "Accuracy evolution during training") -> None:
    """Accuracy-vs-round polylines with axes, ticks, and a legend."""
    width, height = 640, 400
    left, right, top, bottom = 70, 20, 50, 50
    plot_w = width - left - right
    plot_h = height - top - bottom
    n_rounds = max((len(v) for v in curves.values()), default=1)

    def sx(i: int) -> float:
        return left + (plot_w * i / max(n_rounds - 1, 1))

    def sy(v: float) -> float:
        return top + plot_h * (1.0 - min(max(v, 0.0), 1.0))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{left}" y="24" font-size="15" fill="#000000">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#000000"/>',
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" stroke="#000000"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = sy(tick)
        parts.append(f'<line x1="{left - 4}" y1="{y:.1f}" x2="{left}" y2="{y:.1f}" stroke="#000000"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" font-size="11" text-anchor="end" fill="#000000">{tick:.2f}</text>'
        )
    for i in range(n_rounds):
        x = sx(i)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" y2="{top + plot_h + 4}" stroke="#000000"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 18}" font-size="11" text-anchor="middle" fill="#000000">{i + 1}</text>'
        )
    parts.append(
        f'<text x="{left + plot_w // 2}" y="{height - 12}" font-size="12" text-anchor="middle" '
        f'fill="#000000">round</text>'
    )
    for k, (name, series) in enumerate(curves.items()):
        color = _CURVE_COLORS[k % len(_CURVE_COLORS)]
        points = " ".join(f"{sx(i):.1f},{sy(v):.1f}" for i, v in enumerate(series))
        parts.append(
            f'<polyline class="curve" fill="none" stroke="{color}" stroke-width="2" points="{points}"/>'
        )
        ly = top + 16 + 16 * k
        parts.append(f'<line x1="{left + plot_w - 120}" y1="{ly - 4}" x2="{left + plot_w - 96}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{left + plot_w - 90}" y="{ly}" font-size="11" fill="#000000">{escape(name)}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")
