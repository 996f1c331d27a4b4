"""Depth super-resolution: progressive convolutional mapping units plus
guided energy-minimization refinement.

Submodules load lazily so the CLI can pin BLAS thread counts before numpy
is imported.
"""

import importlib

from ._version import __version__
from .errors import (
    ConfigError,
    DataError,
    DegenerateError,
    DimensionError,
    DsrError,
    FormatError,
    IoError,
    SolverError,
)

_EXPORTS = {
    # depth_io
    "DepthMap": "depth_io",
    "GuidanceImage": "depth_io",
    "load_depth": "depth_io",
    "save_depth": "depth_io",
    "load_guidance": "depth_io",
    "guidance_from_color": "depth_io",
    "guidance_from_depth": "depth_io",
    "check_scale_factor": "depth_io",
    # resample
    "resize_bicubic": "resample",
    "resize_nearest": "resample",
    "degrade": "resample",
    "crop_divisible": "resample",
    # metrics
    "MetricReport": "metrics",
    "LaplaceFit": "metrics",
    "rmse": "metrics",
    "mae": "metrics",
    "ssim": "metrics",
    "evaluate_pair": "metrics",
    "fit_laplace": "metrics",
    "gradient_laplace_fit": "metrics",
    # network
    "ConvLayer": "network",
    "UnitWeights": "network",
    "NetworkWeights": "network",
    "TrainConfig": "network",
    "extract_subimages": "network",
    "conv_forward": "network",
    "unit_forward": "network",
    "loss_and_gradients": "network",
    "train_unit": "network",
    "train_progressive": "network",
    "progressive_forward": "network",
    "save_weights": "network",
    "load_weights": "network",
    # smoothness
    "AlphaWindow": "smoothness",
    "SmoothnessConfig": "smoothness",
    "SparseSystem": "smoothness",
    "local_stats": "smoothness",
    "alpha_weights": "smoothness",
    "assemble_system": "smoothness",
    # tv
    "RowWeights": "tv",
    "gradient_row_count": "tv",
    "apply_gradient": "tv",
    "apply_gradient_transpose": "tv",
    "reweight": "tv",
    # refine
    "RefineConfig": "refine",
    "EnergyTerms": "refine",
    "RefineTrace": "refine",
    "energy": "refine",
    "smoothed_energy": "refine",
    "solve_normal_equations": "refine",
    "irls_refine": "refine",
}

__all__ = sorted(_EXPORTS) + [
    "ConfigError",
    "DataError",
    "DegenerateError",
    "DimensionError",
    "DsrError",
    "FormatError",
    "IoError",
    "SolverError",
    "__version__",
]


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(f".{_EXPORTS[name]}", __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
