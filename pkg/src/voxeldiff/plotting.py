"""Matplotlib figures written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "savefig.bbox": "tight",
}

PHASE_COLORS = {
    "diffusion": "#3b6fb6",
    "sources": "#e0a030",
    "hooks": "#c0392b",
    "io": "#7f8c8d",
    "overhead": "#d5d8dc",
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_speedup(rows, path) -> Path:
    """Grouped bars of speedup over serial, one group per workload."""
    keys = list(rows[0].speedup)
    x = np.arange(len(rows))
    width = 0.8 / len(keys)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        for n, k in enumerate(keys):
            vals = [r.speedup[k] for r in rows]
            bars = ax.bar(x + (n - (len(keys) - 1) / 2) * width, vals, width, label=k)
            ax.bar_label(bars, fmt="%.2f", fontsize=7, padding=1)
        ax.axhline(1.0, color="k", lw=0.6, ls=":")
        ax.set_xticks(x, [r.label for r in rows])
        ax.set_xlabel("simulated time")
        ax.set_ylabel("speedup over serial")
        ax.legend(frameon=False, ncol=len(keys))
        return _save(fig, path)


def plot_phase_breakdown(shares: dict[str, float], path, title: str = "") -> Path:
    """Pie chart of wall-time shares per phase."""
    labels = [k for k, v in shares.items() if v > 0.001]
    vals = [shares[k] for k in labels]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.6))
        ax.pie(vals, labels=labels, colors=[PHASE_COLORS.get(k, "0.5") for k in labels],
               autopct="%1.0f%%", startangle=90, counterclock=False,
               wedgeprops={"linewidth": 0.8, "edgecolor": "white"})
        ax.set_aspect("equal")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_convergence(reports, path) -> Path:
    """Log-log error against step size for each convergence report."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(reports), figsize=(3.2 * len(reports), 3.0), squeeze=False)
        for ax, rep in zip(axes[0], reports):
            h = np.asarray(rep.steps)
            e = np.asarray(rep.errors)
            ax.loglog(h, e, "o-", color="#3b6fb6", label=f"measured, order {rep.order:.2f}")
            lo = rep.band[0] + (rep.band[1] - rep.band[0]) / 2
            ax.loglog(h, e[-1] * (h / h[-1]) ** lo, "k:", lw=0.8, label=f"slope {lo:g}")
            ax.set_xlabel(rep.label)
            ax.set_ylabel(r"$\ell_\infty$ error")
            ax.set_title(f"{rep.refine} refinement")
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_slice(plane: np.ndarray, path, title: str = "") -> Path:
    """Grayscale image of one z slice (y rows, x columns)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        im = ax.imshow(plane, origin="lower", cmap="gray", interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.85)
        ax.set_xlabel("x voxel")
        ax.set_ylabel("y voxel")
        if title:
            ax.set_title(title)
        return _save(fig, path)
