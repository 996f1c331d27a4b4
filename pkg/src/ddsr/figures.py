"""Matplotlib renderings of the delimited reports: loss curves, energy traces,
gradient histograms, and evaluation bars. All figures go to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_loss_curves",
    "save_energy_trace",
    "save_gradient_histogram",
    "save_eval_bars",
    "save_depth_panel",
]

_DPI = 120


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_loss_curves(curves: list, path) -> None:
    """One training-loss line per unit, log scale."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, losses in enumerate(curves, start=1):
        ax.semilogy(range(1, len(losses) + 1), losses, label=f"unit {i}")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training MSE")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_energy_trace(records: list, path) -> None:
    """Total energy and its terms across refinement iterations."""
    its = [r.iteration for r in records]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, [r.energy for r in records], marker="o", label="energy")
    ax.plot(its, [r.fidelity_value for r in records], marker=".", label="fidelity")
    ax.plot(its, [r.smoothness_value for r in records], marker=".", label="smoothness")
    ax.plot(its, [r.tv_value for r in records], marker=".", label="tv")
    ax.set_xlabel("iteration")
    ax.set_ylabel("value")
    ax.legend()
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def save_gradient_histogram(observed: np.ndarray, edges: np.ndarray, fit, path,
                            title: str = "gradient histogram") -> None:
    """Observed bin mass with the fitted Laplace mass overlaid."""
    centers = 0.5 * (edges[:-1] + edges[1:])
    width = edges[1] - edges[0]
    z = np.abs(centers - fit.location) / fit.scale
    model = width * np.exp(-z) / (2.0 * fit.scale)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, observed, width=width, alpha=0.6, label="observed")
    ax.plot(centers, model, "r-", lw=1.5,
            label=f"laplace fit (rmse {fit.fit_rmse:.2e})")
    ax.set_xlabel("gradient")
    ax.set_ylabel("bin mass")
    ax.set_title(title)
    # The mass is concentrated near zero; show the informative middle.
    span = max(10 * fit.scale, 5 * width)
    ax.set_xlim(fit.location - span, fit.location + span)
    ax.legend()
    _finish(fig, path)


def save_eval_bars(rows: list, path) -> None:
    """Grouped RMSE bars, one group per image, one bar per method."""
    images = sorted({r["image"] for r in rows})
    methods = sorted({r["method"] for r in rows})
    fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(images)), 4))
    width = 0.8 / max(len(methods), 1)
    xs = np.arange(len(images))
    for j, method in enumerate(methods):
        vals = []
        for img in images:
            match = [r["rmse"] for r in rows if r["image"] == img and r["method"] == method]
            vals.append(match[0] if match else np.nan)
        ax.bar(xs + j * width, vals, width=width, label=method)
    ax.set_xticks(xs + 0.4 - width / 2)
    ax.set_xticklabels(images, rotation=30, ha="right")
    ax.set_ylabel("RMSE")
    ax.legend()
    _finish(fig, path)


def save_depth_panel(maps: list, titles: list, path) -> None:
    """Side-by-side depth maps on a shared gray scale."""
    lo = min(float(m.values.min()) for m in maps)
    hi = max(float(m.values.max()) for m in maps)
    fig, axes = plt.subplots(1, len(maps), figsize=(3 * len(maps), 3.2))
    if len(maps) == 1:
        axes = [axes]
    for ax, m, title in zip(axes, maps, titles):
        im = ax.imshow(m.values, cmap="gray", vmin=lo, vmax=hi)
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
