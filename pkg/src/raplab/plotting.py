"""Matplotlib figures for the ``report`` command.

Everything here reads the CSVs a run already wrote; nothing is recomputed.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import SwapMatrix, TransferGrid  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "axes.spines.top": False,
    "axes.spines.right": False,
    # keep PNG/SVG bytes stable across runs
    "svg.hashsalt": "raplab",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def _annotated_matrix(ax, values: np.ndarray, fmt: str = "{:.3g}"):
    im = ax.imshow(values, cmap="viridis", origin="lower", aspect="auto")
    finite = values[np.isfinite(values)]
    mid = (finite.min() + finite.max()) / 2 if finite.size else 0.0
    for (i, j), v in np.ndenumerate(values):
        label = "n/a" if not np.isfinite(v) else fmt.format(v)
        ax.text(j, i, label, ha="center", va="center", fontsize=7,
                color="black" if np.isfinite(v) and v > mid else "white")
    return im


def plot_transfer_grid(grid: TransferGrid, path, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.6))
        im = _annotated_matrix(ax, grid.means())
        ax.set_xticks(range(len(grid.friction_values)))
        ax.set_xticklabels([f"{f:.3g}" for f in grid.friction_values])
        ax.set_yticks(range(len(grid.mass_values)))
        ax.set_yticklabels([f"{m:.3g}" for m in grid.mass_values])
        ax.set_xlabel("friction scale")
        ax.set_ylabel("mass scale")
        if title:
            ax.set_title(title)
        fig.colorbar(im, ax=ax, label="mean return")
        return _save(fig, path)


def plot_swap_matrix(matrix: SwapMatrix, path, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.6))
        im = _annotated_matrix(ax, matrix.means())
        ticks = range(len(matrix.labels))
        ax.set_xticks(ticks)
        ax.set_xticklabels(matrix.labels, rotation=30)
        ax.set_yticks(ticks)
        ax.set_yticklabels(matrix.labels)
        ax.set_xlabel("adversary run")
        ax.set_ylabel("agent run")
        ax.set_title(title or f"swap returns (alpha={matrix.alpha:g})")
        fig.colorbar(im, ax=ax, label="mean return")
        return _save(fig, path)


def plot_training_curves(curves: Dict[str, Sequence[dict]], path, title: str = "") -> Path:
    """``curves`` maps a label to rows with ``iteration``/``mean_reward``/``std_reward``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for label, rows in curves.items():
            it = np.array([float(r["iteration"]) for r in rows])
            mu = np.array([float(r["mean_reward"]) for r in rows])
            sd = np.array([float(r["std_reward"]) for r in rows])
            ax.plot(it, mu, label=label, lw=1.2)
            ax.fill_between(it, mu - sd, mu + sd, alpha=0.2)
        ax.set_xlabel("iteration")
        ax.set_ylabel("mean episode return")
        if title:
            ax.set_title(title)
        if curves:
            ax.legend(frameon=False)
        return _save(fig, path)


def plot_sweep(rows: Sequence[dict], path, title: str = "") -> Path:
    with plt.rc_context(RC):
        fig, axes = plt.subplots(1, 2, figsize=(6.4, 2.8), sharex=True)
        counts = [int(r["count"]) for r in rows]
        for ax, key, name in zip(axes, ("grid", "holdout"), ("validation grid", "holdout")):
            mu = np.array([float(r[f"{key}_mean"]) for r in rows])
            ax.bar(range(len(counts)), mu, color="#4c72b0")
            if key == "grid":
                sd = np.array([float(r[f"{key}_std"]) for r in rows])
                ax.errorbar(range(len(counts)), mu, yerr=sd, fmt="none", ecolor="black", lw=1)
            ax.set_xticks(range(len(counts)))
            ax.set_xticklabels([str(c) for c in counts])
            ax.set_xlabel("adversaries")
            ax.set_title(name)
        axes[0].set_ylabel("mean return")
        if title:
            fig.suptitle(title)
        return _save(fig, path)
