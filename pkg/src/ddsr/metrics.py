"""Error metrics (RMSE, MAE, SSIM) and gradient-statistics analysis."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .depth_io import DepthMap
from .errors import DegenerateError, DimensionError

__all__ = [
    "MetricReport",
    "LaplaceFit",
    "rmse",
    "mae",
    "ssim",
    "evaluate_pair",
    "fit_laplace",
    "gradient_laplace_fit",
]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

# Scale floor for the Laplace fit when all pooled gradients coincide.
LAPLACE_SCALE_FLOOR = 1e-6


@dataclass
class MetricReport:
    rmse: float
    mae: float
    ssim: float
    n: int

    def to_json(self) -> str:
        return json.dumps({"rmse": self.rmse, "mae": self.mae, "ssim": self.ssim, "n": self.n})

    def to_csv_line(self) -> str:
        return f"{self.rmse},{self.mae},{self.ssim},{self.n}"


@dataclass
class LaplaceFit:
    """Laplace density fitted to a pooled gradient histogram."""

    location: float
    scale: float
    fit_rmse: float


def _check_same_dims(obs: DepthMap, gt: DepthMap) -> None:
    if obs.shape != gt.shape:
        raise DimensionError(f"dimension mismatch: {obs.shape} vs {gt.shape}")


def rmse(obs: DepthMap, gt: DepthMap) -> float:
    """Root mean squared error over all pixels."""
    _check_same_dims(obs, gt)
    diff = obs.values - gt.values
    return float(np.sqrt(np.mean(diff * diff)))


def mae(obs: DepthMap, gt: DepthMap) -> float:
    """Mean absolute error over all pixels."""
    _check_same_dims(obs, gt)
    return float(np.mean(np.abs(obs.values - gt.values)))


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _window_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Valid-mode weighted window means via a sliding-window contraction."""
    win = sliding_window_view(img, kernel.shape)
    return np.tensordot(win, kernel, axes=([2, 3], [0, 1]))


def ssim(obs: DepthMap, gt: DepthMap, dynamic_range: float | None = None) -> float:
    """Mean local structural similarity with an 11x11 Gaussian window.

    dynamic_range defaults to max - min of the ground truth.
    """
    _check_same_dims(obs, gt)
    if obs.height < SSIM_WINDOW or obs.width < SSIM_WINDOW:
        raise DimensionError(
            f"ssim needs maps of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {obs.width}x{obs.height}"
        )
    if dynamic_range is None:
        dynamic_range = float(gt.values.max() - gt.values.min())
    if dynamic_range <= 0:
        if np.array_equal(obs.values, gt.values):
            return 1.0
        raise DegenerateError("dynamic range is zero but maps differ")

    kernel = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    x = obs.values
    y = gt.values
    mu_x = _window_filter(x, kernel)
    mu_y = _window_filter(y, kernel)
    xx = _window_filter(x * x, kernel)
    yy = _window_filter(y * y, kernel)
    xy = _window_filter(x * y, kernel)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y

    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def evaluate_pair(obs: DepthMap, gt: DepthMap, dynamic_range: float | None = None) -> MetricReport:
    """All three metrics for one observed/ground-truth pair."""
    return MetricReport(
        rmse=rmse(obs, gt),
        mae=mae(obs, gt),
        ssim=ssim(obs, gt, dynamic_range),
        n=gt.height * gt.width,
    )


# ---------------------------------------------------------------------------
# Gradient statistics
# ---------------------------------------------------------------------------


def _laplace_cdf(x: np.ndarray, location: float, scale: float) -> np.ndarray:
    z = (x - location) / scale
    return np.where(z < 0, 0.5 * np.exp(z), 1.0 - 0.5 * np.exp(-z))


def fit_laplace(samples: np.ndarray, bins: int) -> LaplaceFit:
    """Fit a Laplace density to samples and score it against their histogram.

    location = sample median, scale = mean absolute deviation from it (the
    maximum-likelihood pair).  fit_rmse compares per-bin histogram mass with
    the fitted density integrated over each bin, on the fixed [-1, 1]
    support.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise DimensionError("no samples to fit")
    if bins < 1:
        raise DimensionError(f"bins must be >= 1, got {bins}")
    location = float(np.median(samples))
    scale = float(np.mean(np.abs(samples - location)))
    scale = max(scale, LAPLACE_SCALE_FLOOR)

    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    observed = counts / samples.size
    cdf = _laplace_cdf(edges, location, scale)
    model = np.diff(cdf)
    fit_rmse = float(np.sqrt(np.mean((observed - model) ** 2)))
    return LaplaceFit(location=location, scale=scale, fit_rmse=fit_rmse)


def pooled_gradients(maps: list[DepthMap]) -> np.ndarray:
    """Forward differences of all maps, both axes pooled.

    Callers normalize depth to [0,1] beforehand so the fixed [-1,1] histogram
    support covers every possible gradient.
    """
    if not maps:
        raise DimensionError("empty map list")
    chunks = []
    for m in maps:
        if m.height < 2 and m.width < 2:
            raise DimensionError("gradient statistics need at least two pixels per map")
        chunks.append(np.diff(m.values, axis=1).ravel())
        chunks.append(np.diff(m.values, axis=0).ravel())
    return np.concatenate(chunks)


def gradient_laplace_fit(maps: list[DepthMap], bins: int) -> LaplaceFit:
    """Laplace fit of the pooled gradient distribution of a [0,1] depth corpus."""
    return fit_laplace(pooled_gradients(maps), bins)


def gradient_histogram(maps: list[DepthMap], bins: int) -> tuple[np.ndarray, np.ndarray, LaplaceFit]:
    """Histogram mass per bin, bin edges, and the Laplace fit (for reports)."""
    samples = pooled_gradients(maps)
    fit = fit_laplace(samples, bins)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    return counts / samples.size, edges, fit
