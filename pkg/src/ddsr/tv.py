"""Forward-difference gradient operator and IRLS row reweighting.

The operator stacks all X differences (row-major) then all Y differences;
the last column/row produce no rows, so constants map to zero and the L1
norm of the output is the anisotropic total variation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depth_io import DepthMap
from .errors import ConfigError, DimensionError

__all__ = [
    "RowWeights",
    "gradient_row_count",
    "apply_gradient",
    "apply_gradient_transpose",
    "reweight",
]


@dataclass
class RowWeights:
    """One positive weight per gradient row: 1/sqrt(|g_i| + epsilon)."""

    weights: np.ndarray
    epsilon: float


def gradient_row_count(height: int, width: int) -> int:
    return height * (width - 1) + (height - 1) * width


def _values(m) -> np.ndarray:
    v = m.values if isinstance(m, DepthMap) else np.asarray(m, dtype=np.float64)
    if v.ndim != 2:
        raise DimensionError(f"expected a 2-D map, got shape {v.shape}")
    return v


def apply_gradient(m) -> np.ndarray:
    """P vec(D): X forward differences then Y forward differences."""
    v = _values(m)
    h, w = v.shape
    if h < 2 and w < 2:
        raise DimensionError("gradients need at least two pixels along one axis")
    return np.concatenate([np.diff(v, axis=1).ravel(), np.diff(v, axis=0).ravel()])


def apply_gradient_transpose(g: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Adjoint of apply_gradient; returns a flat image-sized vector."""
    h, w = dims
    g = np.asarray(g, dtype=np.float64).ravel()
    n_x = h * (w - 1)
    if g.size != gradient_row_count(h, w):
        raise DimensionError(
            f"gradient vector length {g.size} does not match {w}x{h} (want {gradient_row_count(h, w)})"
        )
    out = np.zeros((h, w))
    gx = g[:n_x].reshape(h, w - 1)
    out[:, 1:] += gx
    out[:, :-1] -= gx
    gy = g[n_x:].reshape(h - 1, w)
    out[1:, :] += gy
    out[:-1, :] -= gy
    return out.ravel()


def reweight(current, epsilon: float) -> RowWeights:
    """IRLS weights at the current iterate; the floor keeps them finite."""
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    g = apply_gradient(current)
    return RowWeights(weights=1.0 / np.sqrt(np.abs(g) + epsilon), epsilon=epsilon)
