"""Minimal SVG line plots and heatmaps for evaluation reports."""
from __future__ import annotations

from html import escape
from typing import Optional, Sequence

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")
WIDTH, HEIGHT = 640, 480
MARGIN = dict(left=60, right=200, top=40, bottom=50)


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _text(x, y, s, size=12, anchor="start", extra="") -> str:
    return (f'<text x="{_num(x)}" y="{_num(y)}" font-size="{size}" font-family="sans-serif" '
            f'text-anchor="{anchor}"{extra}>{escape(str(s))}</text>')


def line_plot(
    x: np.ndarray,
    series: Sequence[tuple[str, np.ndarray]],
    title: str,
    x_label: str,
    y_label: str,
    highlight: Optional[str] = None,
) -> str:
    """Polylines on a [0, 1] x [0, 1] frame; ``highlight`` is drawn thicker."""
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(v):
        return MARGIN["left"] + float(v) * pw

    def py(v):
        return MARGIN["top"] + (1.0 - float(v)) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           _text(WIDTH / 2, 24, title, 16, "middle")]
    for i in range(6):
        v = i / 5
        out.append(f'<line x1="{_num(px(0))}" y1="{_num(py(v))}" x2="{_num(px(1))}" y2="{_num(py(v))}" '
                   f'stroke="#ddd"/>')
        out.append(_text(px(0) - 6, py(v) + 4, f"{v:.1f}", 10, "end"))
        out.append(_text(px(v), py(0) + 16, f"{v:.1f}", 10, "middle"))
    out.append(f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
               f'fill="none" stroke="black"/>')
    out.append(_text(px(0.5), HEIGHT - 12, x_label, 12, "middle"))
    out.append(_text(16, py(0.5), y_label, 12, "middle",
                     f' transform="rotate(-90 16 {_num(py(0.5))})"'))
    for i, (name, y) in enumerate(series):
        color = "#0b3d91" if name == highlight else PALETTE[i % len(PALETTE)]
        width = 3 if name == highlight else 1.2
        pts = " ".join(f"{_num(px(a))},{_num(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="{width}"/>')
        out.append(_text(lx + 24, ly, name, 11))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def heatmap(matrix: np.ndarray, labels: Sequence[str], title: str, fmt: str = "{:.2f}") -> str:
    """Grid of cells shaded by value relative to the matrix maximum; rows predicted, columns true."""
    m = np.asarray(matrix, dtype=np.float64)
    n = len(labels)
    if m.shape != (n, n):
        raise ValueError(f"matrix shape {m.shape} does not match {n} labels")
    cell = 48
    left, top = 150, 60
    size_w = left + n * cell + 20
    size_h = top + n * cell + 130
    vmax = m.max() if m.size and m.max() > 0 else 1.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_w}" height="{size_h}" '
           f'viewBox="0 0 {size_w} {size_h}">',
           f'<rect width="{size_w}" height="{size_h}" fill="white"/>',
           _text(size_w / 2, 24, title, 16, "middle")]
    for i in range(n):
        for j in range(n):
            shade = int(round(255 * (1 - m[i, j] / vmax)))
            color = f"rgb({shade},{shade},255)"
            x, y = left + j * cell, top + i * cell
            out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}" stroke="#999"/>')
            ink = "white" if shade < 110 else "black"
            out.append(_text(x + cell / 2, y + cell / 2 + 4, fmt.format(m[i, j]), 10, "middle",
                             f' fill="{ink}"'))
        out.append(_text(left - 6, top + i * cell + cell / 2 + 4, labels[i], 10, "end"))
        cx = left + i * cell + cell / 2
        cy = top + n * cell + 8
        out.append(_text(cx, cy, labels[i], 10, "end", f' transform="rotate(-60 {_num(cx)} {cy})"'))
    out.append(_text(left - 6, top - 8, "predicted \\ true", 11, "end"))
    out.append("</svg>")
    return "\n".join(out) + "\n"
