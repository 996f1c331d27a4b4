"""Three-layer mapping units: conv engine, from-scratch training, weights file I/O.

The forward/backward passes are plain numpy. Convolutions run as GEMMs over
im2col patch matrices; backprop is exact (verified against central finite
differences in the tests).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .depth_io import DepthMap, check_scale_factor
from .errors import ConfigError, DataError, DimensionError, FormatError, IoError
from .resample import crop_divisible, degrade, resize_bicubic

__all__ = [
    "ConvLayer",
    "UnitWeights",
    "NetworkWeights",
    "TrainConfig",
    "extract_subimages",
    "conv_forward",
    "unit_forward",
    "loss_and_gradients",
    "train_unit",
    "train_progressive",
    "progressive_forward",
    "save_weights",
    "load_weights",
]

INIT_STD = 0.001
# Output layer trains at a tenth of the feature-layer rate.
LAST_LAYER_LR_RATIO = 0.1

# Inference needs room for the 9+1+5 kernel footprint.
MIN_UNIT_INPUT = 13

_ACT_CODES = {"linear": 0, "relu": 1}
_ACT_NAMES = {code: name for name, code in _ACT_CODES.items()}

WEIGHTS_MAGIC = b"DDSR"
WEIGHTS_VERSION = 1


@dataclass
class ConvLayer:
    """One convolution layer: cross-correlation plus bias, then activation."""

    weights: np.ndarray  # [out, in, kh, kw]
    bias: np.ndarray  # [out]
    activation: str  # "relu" or "linear"

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 4:
            raise DimensionError(f"layer weights must be 4-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} output channels"
            )
        if self.activation not in _ACT_CODES:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("layer parameters must be finite")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]


@dataclass
class UnitWeights:
    """One mapping unit: three conv layers, relu/relu/linear, 1 channel in and out."""

    layers: tuple[ConvLayer, ConvLayer, ConvLayer]

    def __post_init__(self):
        self.layers = tuple(self.layers)
        if len(self.layers) != 3:
            raise ConfigError(f"a unit has exactly 3 layers, got {len(self.layers)}")
        acts = tuple(l.activation for l in self.layers)
        if acts != ("relu", "relu", "linear"):
            raise ConfigError(f"unit activations must be relu/relu/linear, got {acts}")
        if self.layers[0].in_channels != 1 or self.layers[2].out_channels != 1:
            raise ConfigError("a unit maps one depth channel to one depth channel")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_channels != b.in_channels:
                raise ConfigError(
                    f"channel chain broken: {a.out_channels} -> {b.in_channels}"
                )


@dataclass
class NetworkWeights:
    """Ordered stack of trained units plus the depth normalization divisor."""

    units: list[UnitWeights]
    depth_norm: float

    def __post_init__(self):
        if not self.units:
            raise ConfigError("network needs at least one unit")
        if not (self.depth_norm > 0 and np.isfinite(self.depth_norm)):
            raise ConfigError(f"depth_norm must be positive, got {self.depth_norm}")


@dataclass
class TrainConfig:
    sub_image: int = 33
    stride: int = 14
    learning_rate: float = 1e-4
    epochs: int = 50
    batch: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.sub_image < 14:
            raise ConfigError("sub_image must exceed the 9+1+5 kernel footprint")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")


def _new_unit(rng: np.random.Generator) -> UnitWeights:
    """Fresh 9-1-5 unit, weights Gaussian(0, 0.001^2), biases zero."""
    shapes = [(64, 1, 9, 9), (32, 64, 1, 1), (1, 32, 5, 5)]
    acts = ["relu", "relu", "linear"]
    layers = []
    for shape, act in zip(shapes, acts):
        layers.append(
            ConvLayer(
                weights=rng.normal(0.0, INIT_STD, size=shape),
                bias=np.zeros(shape[0]),
                activation=act,
            )
        )
    return UnitWeights(layers=tuple(layers))


def _layer_list(unit) -> Sequence[ConvLayer]:
    return unit.layers if isinstance(unit, UnitWeights) else list(unit)


# ---------------------------------------------------------------------------
# Forward / backward engine
# ---------------------------------------------------------------------------


def _pad_replicate(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    top = (kh - 1) // 2
    left = (kw - 1) // 2
    return np.pad(x, ((0, 0), (0, 0), (top, kh - 1 - top), (left, kw - 1 - left)), mode="edge")


def _patch_matrix(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """im2col: (B, c, H, W) -> (B*H'*W', c*kh*kw) with H' = H-kh+1."""
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win.transpose(0, 2, 3, 1, 4, 5)
    b, hp, wp = win.shape[:3]
    return win.reshape(b * hp * wp, -1), hp, wp


def _conv_cols(x: np.ndarray, layer: ConvLayer):
    kh, kw = layer.kernel
    if x.shape[2] < kh or x.shape[3] < kw:
        raise DimensionError(
            f"input {x.shape[2]}x{x.shape[3]} smaller than {kh}x{kw} kernel"
        )
    cols, hp, wp = _patch_matrix(x, kh, kw)
    y = cols @ layer.weights.reshape(layer.out_channels, -1).T + layer.bias
    return y.reshape(x.shape[0], hp, wp, layer.out_channels).transpose(0, 3, 1, 2), cols


def _conv_valid(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    return _conv_cols(x, layer)[0]


def _forward_batch(x: np.ndarray, layers: Sequence[ConvLayer], padding: str):
    """Run the stack; returns output and per-layer (input, preact, cols) caches."""
    caches = []
    h = x
    for layer in layers:
        if h.shape[1] != layer.in_channels:
            raise DimensionError(
                f"expected {layer.in_channels} channels, got {h.shape[1]}"
            )
        if padding == "replicate_same":
            h = _pad_replicate(h, *layer.kernel)
        z, cols = _conv_cols(h, layer)
        caches.append((h, z, cols))
        h = np.maximum(z, 0.0) if layer.activation == "relu" else z
    return h, caches


def _backward_batch(dy: np.ndarray, layers: Sequence[ConvLayer], caches):
    """Exact gradients for a valid-mode forward pass. Returns [(dW, db), ...]."""
    grads = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        x, z, cols = caches[idx]
        if layer.activation == "relu":
            dy = dy * (z > 0.0)
        kh, kw = layer.kernel
        b, _, hp, wp = dy.shape
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(-1, layer.out_channels)
        dw = (dy_mat.T @ cols).reshape(layer.weights.shape)
        db = dy_mat.sum(axis=0)
        grads[idx] = (dw, db)
        if idx > 0:
            dx = np.zeros_like(x)
            for u in range(kh):
                for v in range(kw):
                    part = np.tensordot(dy, layer.weights[:, :, u, v], axes=([1], [0]))
                    dx[:, :, u : u + hp, v : v + wp] += part.transpose(0, 3, 1, 2)
            dy = dx
    return grads


def conv_forward(x: np.ndarray, layer: ConvLayer, padding: str = "valid") -> np.ndarray:
    """Single-image convolution: (c, h, w) -> (out, h', w')."""
    if padding not in ("valid", "replicate_same"):
        raise ConfigError(f"unknown padding mode {padding!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"conv_forward wants a (c, h, w) array, got shape {x.shape}")
    if x.shape[0] != layer.in_channels:
        raise DimensionError(f"expected {layer.in_channels} channels, got {x.shape[0]}")
    xb = x[None]
    if padding == "replicate_same":
        xb = _pad_replicate(xb, *layer.kernel)
    y = _conv_valid(xb, layer)[0]
    return np.maximum(y, 0.0) if layer.activation == "relu" else y


def _apply_unit(values: np.ndarray, layers: Sequence[ConvLayer]) -> np.ndarray:
    """Replicate-padded inference on a 2-D array."""
    y, _ = _forward_batch(values[None, None], layers, "replicate_same")
    return y[0, 0]


def unit_forward(depth: DepthMap, unit: UnitWeights) -> DepthMap:
    """Inference pass of one unit; replicate padding keeps dimensions."""
    if depth.height < MIN_UNIT_INPUT or depth.width < MIN_UNIT_INPUT:
        raise DimensionError(
            f"unit_forward needs at least {MIN_UNIT_INPUT}x{MIN_UNIT_INPUT}, "
            f"got {depth.width}x{depth.height}"
        )
    return DepthMap(_apply_unit(depth.values, _layer_list(unit)), scale=depth.scale)


def _stack_batch(pairs) -> tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise DataError("empty batch")
    xs = np.stack([np.asarray(x, dtype=np.float64) for x, _ in pairs])[:, None]
    ts = np.stack([np.asarray(t, dtype=np.float64) for _, t in pairs])[:, None]
    return xs, ts


def loss_and_gradients(batch, unit) -> tuple[float, list]:
    """Mean squared error over a batch plus exact parameter gradients.

    Forward runs in valid mode; targets larger than the network output are
    center-cropped to it. Loss averages over every output element.
    """
    layers = _layer_list(unit)
    xs, ts = _stack_batch(batch)
    y, caches = _forward_batch(xs, layers, "valid")
    mh = ts.shape[2] - y.shape[2]
    mw = ts.shape[3] - y.shape[3]
    if mh < 0 or mw < 0 or mh % 2 or mw % 2:
        raise DimensionError(
            f"target {ts.shape[2]}x{ts.shape[3]} does not cover output {y.shape[2]}x{y.shape[3]}"
        )
    if mh or mw:
        ts = ts[:, :, mh // 2 : ts.shape[2] - mh // 2, mw // 2 : ts.shape[3] - mw // 2]
    diff = y - ts
    loss = float(np.mean(diff * diff))
    grads = _backward_batch(2.0 * diff / diff.size, layers, caches)
    return loss, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def extract_subimages(hr: DepthMap, lr_input: DepthMap, cfg: TrainConfig) -> list:
    """Stride-sampled (input, target) patch pairs.

    Inputs are sub_image squares; targets are their centers cropped by the
    valid-convolution margin (33 -> 21 for the 9-1-5 unit).
    """
    if hr.shape != lr_input.shape:
        raise DimensionError(f"dimension mismatch: {hr.shape} vs {lr_input.shape}")
    s = cfg.sub_image
    if hr.height < s or hr.width < s:
        raise DimensionError(f"map {hr.width}x{hr.height} smaller than {s}x{s} sub-image")
    margin = 6  # (9-1)/2 + 0 + (5-1)/2
    pairs = []
    for top in range(0, hr.height - s + 1, cfg.stride):
        for left in range(0, hr.width - s + 1, cfg.stride):
            x = lr_input.values[top : top + s, left : left + s]
            t = hr.values[top + margin : top + s - margin, left + margin : left + s - margin]
            pairs.append((x, t))
    return pairs


def train_unit(dataset, cfg: TrainConfig, init_seed: int):
    """Minibatch SGD on one unit. Returns (weights, per-epoch mean loss)."""
    if not dataset:
        raise DataError("empty training dataset")
    if cfg.learning_rate <= 0:
        raise ConfigError(f"learning_rate must be positive, got {cfg.learning_rate}")
    if cfg.epochs <= 0:
        raise ConfigError(f"epochs must be positive, got {cfg.epochs}")
    if cfg.batch < 1:
        raise ConfigError(f"batch must be >= 1, got {cfg.batch}")

    rng = np.random.default_rng(init_seed)
    unit = _new_unit(rng)
    rates = [cfg.learning_rate, cfg.learning_rate, cfg.learning_rate * LAST_LAYER_LR_RATIO]
    n = len(dataset)
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        seen = 0
        for start in range(0, n, cfg.batch):
            batch = [dataset[i] for i in order[start : start + cfg.batch]]
            loss, grads = loss_and_gradients(batch, unit)
            for layer, lr, (dw, db) in zip(unit.layers, rates, grads):
                layer.weights -= lr * dw
                layer.bias -= lr * db
            total += loss * len(batch)
            seen += len(batch)
        losses.append(total / seen)
    return unit, losses


def _degraded_input(hr: DepthMap, factor: int, method: str) -> DepthMap:
    lr = degrade(hr, factor, method=method)
    return resize_bicubic(lr, hr.width, hr.height)


def train_progressive(corpus, factor: int, n_units: int, cfg: TrainConfig,
                      degrade_method: str = "decimate"):
    """Train a progressive stack: unit k learns from the output of units 1..k-1.

    Returns (NetworkWeights, per-unit loss curves). Depth values are
    normalized by the corpus maximum before patch extraction.
    """
    if not corpus:
        raise DataError("empty training corpus")
    if n_units < 1:
        raise ConfigError(f"n_units must be >= 1, got {n_units}")

    hrs = [crop_divisible(m, factor) for m in corpus]
    norm = max(float(m.values.max()) for m in hrs)
    if norm <= 0:
        norm = 1.0
    targets = [DepthMap(m.values / norm) for m in hrs]
    inputs = [DepthMap(_degraded_input(m, factor, degrade_method).values / norm) for m in hrs]

    units = []
    curves = []
    for k in range(n_units):
        dataset = []
        for hr_n, in_n in zip(targets, inputs):
            dataset.extend(extract_subimages(hr_n, in_n, cfg))
        unit, losses = train_unit(dataset, cfg, init_seed=cfg.seed + k)
        units.append(unit)
        curves.append(losses)
        if k + 1 < n_units:
            inputs = [DepthMap(_apply_unit(m.values, unit.layers)) for m in inputs]
    return NetworkWeights(units=units, depth_norm=norm), curves


def progressive_forward(lr: DepthMap, factor: int, net: NetworkWeights,
                        collect_stages: bool = False):
    """Bicubic upscale then every unit in order; the result is the refinement unary.

    With collect_stages, also returns [bicubic, after unit 1, ...] denormalized.
    """
    check_scale_factor(factor)
    if lr.height * factor < MIN_UNIT_INPUT or lr.width * factor < MIN_UNIT_INPUT:
        raise DimensionError(
            f"upscaled {lr.height * factor}x{lr.width * factor} map is smaller "
            f"than the {MIN_UNIT_INPUT}x{MIN_UNIT_INPUT} unit minimum"
        )
    up = resize_bicubic(lr, lr.width * factor, lr.height * factor)
    x = up.values / net.depth_norm
    stages = [up]
    for unit in net.units:
        x = _apply_unit(x, unit.layers)
        if collect_stages:
            stages.append(DepthMap(x * net.depth_norm, scale=lr.scale))
    out = DepthMap(x * net.depth_norm, scale=lr.scale)
    if collect_stages:
        return out, stages
    return out


# ---------------------------------------------------------------------------
# Weights file
# ---------------------------------------------------------------------------


def save_weights(net: NetworkWeights, path) -> None:
    """DDSR format: magic, version, unit count, depth_norm, then raw layers."""
    buf = bytearray()
    buf += WEIGHTS_MAGIC
    buf += struct.pack("<II", WEIGHTS_VERSION, len(net.units))
    buf += struct.pack("<d", net.depth_norm)
    for unit in net.units:
        for layer in unit.layers:
            kh, kw = layer.kernel
            buf += struct.pack(
                "<IIIII", kh, kw, layer.in_channels, layer.out_channels,
                _ACT_CODES[layer.activation],
            )
            buf += np.ascontiguousarray(layer.weights, dtype="<f8").tobytes()
            buf += np.ascontiguousarray(layer.bias, dtype="<f8").tobytes()
    try:
        Path(path).write_bytes(bytes(buf))
    except OSError as exc:
        raise IoError(f"cannot write weights file {path}: {exc}") from exc


def load_weights(path) -> NetworkWeights:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read weights file {path}: {exc}") from exc
    if raw[:4] != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic in {path}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"truncated weights file {path}")
        chunk = raw[pos : pos + n]
        pos += n
        return chunk

    version, n_units = struct.unpack("<II", take(8))
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported weights version {version}")
    (depth_norm,) = struct.unpack("<d", take(8))
    units = []
    for _ in range(n_units):
        layers = []
        for _ in range(3):
            kh, kw, cin, cout, act = struct.unpack("<IIIII", take(20))
            if act not in _ACT_NAMES:
                raise FormatError(f"unknown activation code {act}")
            w = np.frombuffer(take(8 * cout * cin * kh * kw), dtype="<f8")
            b = np.frombuffer(take(8 * cout), dtype="<f8")
            layers.append(
                ConvLayer(
                    weights=w.reshape(cout, cin, kh, kw),
                    bias=b,
                    activation=_ACT_NAMES[act],
                )
            )
        try:
            units.append(UnitWeights(layers=tuple(layers)))
        except ConfigError as exc:
            raise FormatError(f"inconsistent unit in {path}: {exc}") from exc
    if pos != len(raw):
        raise FormatError(f"trailing bytes in weights file {path}")
    try:
        return NetworkWeights(units=units, depth_norm=depth_norm)
    except ConfigError as exc:
        raise FormatError(f"bad weights header in {path}: {exc}") from exc
