"""Seeded synthetic depth scenes: piecewise planar clutter for training and
evaluation, plus walk-based corpora with prescribed gradient statistics."""

from __future__ import annotations

import numpy as np

from .depth_io import DepthMap

__all__ = [
    "rect_ramp_scene",
    "scene_corpus",
    "two_plane_scene",
    "laplace_walk_corpus",
    "uniform_walk_corpus",
]


def rect_ramp_scene(rng: np.random.Generator, height: int = 64, width: int = 64,
                    noise: float = 0.0) -> DepthMap:
    """Sloped background plus random rectangles with constant or ramped fill."""
    ys = np.linspace(0.0, 1.0, height)[:, None]
    xs = np.linspace(0.0, 1.0, width)[None, :]
    v = rng.uniform(0.25, 0.75) + rng.uniform(-0.3, 0.3) * xs + rng.uniform(-0.3, 0.3) * ys

    for _ in range(int(rng.integers(4, 9))):
        rh = int(rng.integers(height // 6, height // 2 + 1))
        rw = int(rng.integers(width // 6, width // 2 + 1))
        top = int(rng.integers(0, height - rh + 1))
        left = int(rng.integers(0, width - rw + 1))
        block = (slice(top, top + rh), slice(left, left + rw))
        if rng.random() < 0.5:
            v[block] = rng.uniform(0.05, 0.95)
        else:
            span = rng.uniform(0.1, 0.4)
            ry = np.linspace(0.0, 1.0, rh)[:, None]
            rx = np.linspace(0.0, 1.0, rw)[None, :]
            direction = rng.uniform(-1.0, 1.0, size=2)
            ramp = direction[0] * rx + direction[1] * ry
            lo, hi = ramp.min(), ramp.max()
            if hi > lo:
                ramp = (ramp - lo) / (hi - lo)
            v[block] = rng.uniform(0.1, 0.9 - span) + span * ramp

    if noise > 0:
        v = v + rng.normal(0.0, noise, size=v.shape)
    return DepthMap(np.clip(v, 0.0, 1.0))


def scene_corpus(seed: int, count: int, height: int = 64, width: int = 64,
                 noise: float = 0.0) -> list:
    """Deterministic list of rect/ramp scenes from one seed."""
    rng = np.random.default_rng(seed)
    return [rect_ramp_scene(rng, height, width, noise) for _ in range(count)]


def two_plane_scene(height: int, width: int, left: float, right: float,
                    edge_col: int, noise: float = 0.0, seed: int = 0) -> DepthMap:
    """Vertical step edge between two constant planes, optionally noisy."""
    v = np.full((height, width), float(left))
    v[:, edge_col:] = float(right)
    if noise > 0:
        v = v + np.random.default_rng(seed).normal(0.0, noise, size=v.shape)
    return DepthMap(v)


def _walk_map(inc_x: np.ndarray, inc_y: np.ndarray) -> DepthMap:
    """Separable map whose forward differences reproduce the given increments."""
    x = np.concatenate([[0.0], np.cumsum(inc_x)])
    y = np.concatenate([[0.0], np.cumsum(inc_y)])
    v = 0.5 + (x[None, :] - x.mean()) + (y[:, None] - y.mean())
    # Excursions beyond [0,1] are vanishingly rare at the default scales.
    return DepthMap(np.clip(v, 0.0, 1.0))


def laplace_walk_corpus(seed: int, count: int = 1024, height: int = 16,
                        width: int = 16, scale: float = 0.0125) -> list:
    """Corpus whose pooled gradients are Laplace(0, scale) draws."""
    rng = np.random.default_rng(seed)
    return [
        _walk_map(rng.laplace(0.0, scale, width - 1), rng.laplace(0.0, scale, height - 1))
        for _ in range(count)
    ]


def uniform_walk_corpus(seed: int, count: int = 1024, height: int = 16,
                        width: int = 16, half_range: float = 0.025) -> list:
    """Same construction with uniform increments; a non-Laplace control."""
    rng = np.random.default_rng(seed)
    return [
        _walk_map(
            rng.uniform(-half_range, half_range, width - 1),
            rng.uniform(-half_range, half_range, height - 1),
        )
        for _ in range(count)
    ]
