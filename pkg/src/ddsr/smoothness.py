"""Guidance-modulated smoothness weights and the sparse system they induce.

Each pixel is modeled as a normalized weighted average of its window
neighbors; weights fall off with squared depth and guidance contrast scaled
by local variance. The residual of that model over the whole image is the
quadratic ||A vec(D) - b||^2 with A = I - W (row-normalized weights) and
b = 0, so constants are always in the null space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse

from .depth_io import DepthMap, GuidanceImage
from .errors import ConfigError, DimensionError

__all__ = [
    "AlphaWindow",
    "SmoothnessConfig",
    "SparseSystem",
    "local_stats",
    "alpha_weights",
    "assemble_system",
    "dump_system",
]


@dataclass
class SmoothnessConfig:
    window: int = 7
    sigma_floor: float = 1e-4
    use_guidance: str = "self"  # "self" or "color"

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 3, got {self.window}")
        if self.sigma_floor <= 0:
            raise ConfigError(f"sigma_floor must be positive, got {self.sigma_floor}")
        if self.use_guidance not in ("self", "color"):
            raise ConfigError(f"use_guidance must be 'self' or 'color', got {self.use_guidance!r}")


@dataclass
class AlphaWindow:
    """Normalized neighbor weights for one pixel; the center is excluded."""

    center: tuple[int, int]
    neighbors: list  # [((row, col), weight), ...]
    window: int


@dataclass
class SparseSystem:
    """A (CSR, one row per pixel) and b (always zero here) over vec(D)."""

    rows: int
    a: scipy.sparse.csr_matrix
    b: np.ndarray = field(repr=False)
    height: int = field(default=0)
    width: int = field(default=0)


def _normalize01(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.full(values.shape, 0.5)
    return (values - lo) / (hi - lo)


def local_stats(values: np.ndarray, u: tuple[int, int], window: int) -> float:
    """Population variance over the window around u, clipped to the image."""
    h, w = values.shape
    r, c = u
    if not (0 <= r < h and 0 <= c < w):
        raise DimensionError(f"pixel {u} outside {w}x{h} image")
    half = window // 2
    patch = values[max(0, r - half) : r + half + 1, max(0, c - half) : c + half + 1]
    return float(np.var(patch))


def _box_sum(a: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel sum over the clipped window, via an integral image."""
    h, w = a.shape
    half = window // 2
    s = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    r0 = np.clip(np.arange(h) - half, 0, h)
    r1 = np.clip(np.arange(h) + half + 1, 0, h)
    c0 = np.clip(np.arange(w) - half, 0, w)
    c1 = np.clip(np.arange(w) + half + 1, 0, w)
    return s[np.ix_(r1, c1)] - s[np.ix_(r0, c1)] - s[np.ix_(r1, c0)] + s[np.ix_(r0, c0)]


def _window_variance(values: np.ndarray, window: int) -> np.ndarray:
    h, w = values.shape
    half = window // 2
    rows = np.clip(np.arange(h) + half + 1, 0, h) - np.clip(np.arange(h) - half, 0, h)
    cols = np.clip(np.arange(w) + half + 1, 0, w) - np.clip(np.arange(w) - half, 0, w)
    counts = np.outer(rows, cols)
    mean = _box_sum(values, window) / counts
    mean_sq = _box_sum(values * values, window) / counts
    return np.maximum(mean_sq - mean * mean, 0.0)


def _kernel_pair(unary_depth: DepthMap, guide: GuidanceImage):
    """Dimension check plus the shared [0,1] depth normalization."""
    if unary_depth.shape != guide.values.shape:
        raise DimensionError(
            f"dimension mismatch: depth {unary_depth.shape} vs guide {guide.values.shape}"
        )
    return _normalize01(unary_depth.values), guide.values


def alpha_weights(unary_depth: DepthMap, guide: GuidanceImage, u: tuple[int, int],
                  cfg: SmoothnessConfig) -> AlphaWindow:
    """Neighbor weights for one pixel: product of depth and guidance kernels."""
    dn, g = _kernel_pair(unary_depth, guide)
    h, w = dn.shape
    r, c = u
    if not (0 <= r < h and 0 <= c < w):
        raise DimensionError(f"pixel {u} outside {w}x{h} image")
    half = cfg.window // 2
    vd = local_stats(dn, u, cfg.window)
    vg = local_stats(g, u, cfg.window)
    vd = max(vd, cfg.sigma_floor)
    vg = max(vg, cfg.sigma_floor)
    raw = []
    for rr in range(max(0, r - half), min(h, r + half + 1)):
        for cc in range(max(0, c - half), min(w, c + half + 1)):
            if (rr, cc) == (r, c):
                continue
            wd = np.exp(-((dn[r, c] - dn[rr, cc]) ** 2) / (2.0 * vd))
            wg = np.exp(-((g[r, c] - g[rr, cc]) ** 2) / (2.0 * vg))
            raw.append(((rr, cc), wd * wg))
    total = sum(v for _, v in raw)
    if total <= 0:
        raise DimensionError(f"pixel {u} has no usable neighbors")
    return AlphaWindow(
        center=(r, c),
        neighbors=[(v, wt / total) for v, wt in raw],
        window=cfg.window,
    )


def assemble_system(unary_depth: DepthMap, guide: GuidanceImage,
                    cfg: SmoothnessConfig) -> SparseSystem:
    """Build A = I - W over all pixels (vectorized per window offset) and b = 0."""
    dn, g = _kernel_pair(unary_depth, guide)
    var_d = np.maximum(_window_variance(dn, cfg.window), cfg.sigma_floor)
    var_g = np.maximum(_window_variance(g, cfg.window), cfg.sigma_floor)
    h, w = dn.shape
    n = h * w
    if n < 2:
        raise DimensionError("need at least two pixels to build a smoothness system")
    half = cfg.window // 2
    flat = np.arange(n).reshape(h, w)

    offsets = [(dy, dx) for dy in range(-half, half + 1) for dx in range(-half, half + 1)
               if (dy, dx) != (0, 0)]
    per_offset = []
    weight_sum = np.zeros((h, w))
    for dy, dx in offsets:
        r_lo, r_hi = max(0, -dy), h - max(0, dy)
        c_lo, c_hi = max(0, -dx), w - max(0, dx)
        ctr = (slice(r_lo, r_hi), slice(c_lo, c_hi))
        nbr = (slice(r_lo + dy, r_hi + dy), slice(c_lo + dx, c_hi + dx))
        wd = np.exp(-((dn[ctr] - dn[nbr]) ** 2) / (2.0 * var_d[ctr]))
        wg = np.exp(-((g[ctr] - g[nbr]) ** 2) / (2.0 * var_g[ctr]))
        wt = wd * wg
        weight_sum[ctr] += wt
        per_offset.append((ctr, nbr, wt))

    rows = [np.arange(n)]
    cols = [np.arange(n)]
    data = [np.ones(n)]
    for ctr, nbr, wt in per_offset:
        rows.append(flat[ctr].ravel())
        cols.append(flat[nbr].ravel())
        data.append((-wt / weight_sum[ctr]).ravel())
    a = scipy.sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return SparseSystem(rows=n, a=a, b=np.zeros(n), height=h, width=w)


def dump_system(sys: SparseSystem, path) -> None:
    """Matrix Market coordinate dump of A for external inspection."""
    scipy.io.mmwrite(str(path), sys.a.tocoo())
