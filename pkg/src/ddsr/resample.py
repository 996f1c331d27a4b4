"""Resampling (bicubic, nearest) and the HR -> LR degradation protocol."""

from __future__ import annotations

import numpy as np

from .depth_io import DepthMap, check_scale_factor
from .errors import DimensionError

__all__ = ["resize_bicubic", "resize_nearest", "degrade", "cubic_kernel"]

# Catmull-Rom family parameter for the cubic convolution kernel.
_A = -0.5


def cubic_kernel(t: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5, support (-2, 2)."""
    t = np.abs(t)
    out = np.zeros_like(t)
    near = t <= 1.0
    far = (t > 1.0) & (t < 2.0)
    out[near] = (_A + 2.0) * t[near] ** 3 - (_A + 3.0) * t[near] ** 2 + 1.0
    out[far] = _A * (t[far] ** 3 - 5.0 * t[far] ** 2 + 8.0 * t[far] - 4.0)
    return out


def _resample_axis_bicubic(arr: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    """Resample one axis with the 4-tap cubic kernel, clamping sample coords."""
    in_n = arr.shape[axis]
    if out_n == in_n:
        return arr
    ratio = in_n / out_n
    # Center-aligned mapping from output to input coordinates.
    src = (np.arange(out_n) + 0.5) * ratio - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    out_shape = list(arr.shape)
    out_shape[axis] = out_n
    result = np.zeros(out_shape, dtype=np.float64)
    moved = np.moveaxis(arr, axis, 0)
    res_moved = np.moveaxis(result, axis, 0)
    for tap in range(-1, 3):
        idx = np.clip(base + tap, 0, in_n - 1)
        w = cubic_kernel(frac - tap)
        res_moved += w[(slice(None),) + (None,) * (arr.ndim - 1)] * moved[idx]
    return result


def _check_out_dims(out_w: int, out_h: int) -> None:
    if out_w < 1 or out_h < 1:
        raise DimensionError(f"output dimensions must be >= 1, got {out_w}x{out_h}")


def resize_bicubic(depth: DepthMap, out_w: int, out_h: int) -> DepthMap:
    """Bicubic resize (separable a = -0.5 kernel, clamped borders)."""
    _check_out_dims(out_w, out_h)
    vals = _resample_axis_bicubic(depth.values, out_h, axis=0)
    vals = _resample_axis_bicubic(vals, out_w, axis=1)
    return DepthMap(values=vals, scale=depth.scale)


def resize_nearest(depth: DepthMap, out_w: int, out_h: int) -> DepthMap:
    """Nearest-neighbour resize by center mapping."""
    _check_out_dims(out_w, out_h)
    h, w = depth.shape
    rows = np.clip(np.floor((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), 0, h - 1)
    cols = np.clip(np.floor((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), 0, w - 1)
    return DepthMap(values=depth.values[np.ix_(rows, cols)], scale=depth.scale)


def crop_divisible(depth: DepthMap, factor: int) -> DepthMap:
    """Top-left crop to the largest region divisible by ``factor``."""
    factor = check_scale_factor(factor)
    h = (depth.height // factor) * factor
    w = (depth.width // factor) * factor
    if h == 0 or w == 0:
        raise DimensionError(
            f"map {depth.width}x{depth.height} too small to degrade by factor {factor}"
        )
    if (h, w) == depth.shape:
        return depth
    return DepthMap(values=depth.values[:h, :w], scale=depth.scale)


def degrade(hr: DepthMap, factor: int, method: str = "decimate") -> DepthMap:
    """Produce the low-resolution counterpart of an HR map.

    decimate keeps the top-left pixel of each factor x factor block; box
    averages each block.  Non-divisible inputs are top-left cropped first.
    """
    factor = check_scale_factor(factor)
    cropped = crop_divisible(hr, factor)
    v = cropped.values
    if method == "decimate":
        lr = v[::factor, ::factor]
    elif method == "box":
        h, w = v.shape
        lr = v.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))
    else:
        raise DimensionError(f"unknown degrade method {method!r}")
    return DepthMap(values=lr, scale=hr.scale)
