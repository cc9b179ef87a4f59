"""Dependency-free SVG heatmap for transfer grids.

Friction runs along x, mass along y (largest mass on the top row). Cell
colour interpolates linearly from DARK at the grid minimum to BRIGHT at the
maximum; a constant grid gets the mid-ramp colour.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Tuple
from xml.sax.saxutils import escape

from .evaluation import TransferGrid

DARK = (24, 16, 72)
BRIGHT = (252, 230, 64)
FAILED = (160, 160, 160)
CELL = 64
MARGIN = 70


def ramp(t: float) -> Tuple[int, int, int]:
    t = min(max(t, 0.0), 1.0)
    return tuple(round(d + (b - d) * t) for d, b in zip(DARK, BRIGHT))


def _hex(rgb) -> str:
    return "#%02x%02x%02x" % tuple(rgb)


def _fmt(v: float) -> str:
    return f"{v:.3g}"


def emit_heatmap_svg(grid: TransferGrid, path, title: Optional[str] = None) -> Path:
    means = grid.means()
    if means.size == 0:
        raise ValueError("cannot draw an empty grid")
    finite = means[~(means != means)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    n_mass, n_fric = means.shape
    width = MARGIN + n_fric * CELL + 10
    height = MARGIN + n_mass * CELL + 40
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
    ]
    if title:
        out.append(f'<text x="{width / 2}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>')
    top = 30
    for r in range(n_mass):
        i = n_mass - 1 - r  # highest mass on top
        y = top + r * CELL
        for j in range(n_fric):
            x = MARGIN + j * CELL
            v = float(means[i, j])
            if math.isnan(v):
                rgb, label = FAILED, "n/a"
            else:
                t = 0.5 if hi == lo else (v - lo) / (hi - lo)
                rgb, label = ramp(t), _fmt(v)
            out.append(
                f'<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{_hex(rgb)}" '
                f'data-mass="{grid.mass_values[i]!r}" data-friction="{grid.friction_values[j]!r}" '
                f'data-mean="{v!r}"/>'
            )
            ink = "#000000" if sum(rgb) > 380 else "#ffffff"
            out.append(
                f'<text x="{x + CELL / 2}" y="{y + CELL / 2 + 4}" text-anchor="middle" '
                f'font-size="11" fill="{ink}">{label}</text>'
            )
        out.append(
            f'<text class="ytick" x="{MARGIN - 6}" y="{y + CELL / 2 + 4}" text-anchor="end" '
            f'font-size="11">{_fmt(grid.mass_values[i])}</text>'
        )
    base = top + n_mass * CELL
    for j, f in enumerate(grid.friction_values):
        out.append(
            f'<text class="xtick" x="{MARGIN + j * CELL + CELL / 2}" y="{base + 16}" '
            f'text-anchor="middle" font-size="11">{_fmt(f)}</text>'
        )
    out.append(
        f'<text x="{MARGIN + n_fric * CELL / 2}" y="{base + 34}" text-anchor="middle" '
        f'font-size="12">friction scale</text>'
    )
    out.append(
        f'<text x="14" y="{top + n_mass * CELL / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {top + n_mass * CELL / 2})">mass scale</text>'
    )
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
