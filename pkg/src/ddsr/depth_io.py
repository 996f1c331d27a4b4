"""Depth and guidance image types plus PFM/PGM/PNG file I/O.

Depth maps are stored as float64 grids in row-major order together with a
``scale`` recording the code range of the source file (1.0 for float data,
the max code value for integer PGM data).  Metrics and refinement run in
this stored domain so that reported errors are comparable with code-valued
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError, IoError

__all__ = [
    "DepthMap",
    "GuidanceImage",
    "load_depth",
    "save_depth",
    "load_guidance",
    "guidance_from_color",
    "guidance_from_depth",
]


@dataclass
class DepthMap:
    """Single-channel depth grid.

    values: (height, width) float64 array, all finite.
    scale:  positive divisor that maps stored values to normalized depth
            (1.0 when the source was already floating point).
    """

    values: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"depth map must be a non-empty 2-D grid, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("depth map contains non-finite values")
        if not (self.scale > 0):
            raise DataError(f"depth scale must be positive, got {self.scale}")
        arr.flags.writeable = False
        self.values = arr
        self.scale = float(self.scale)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass
class GuidanceImage:
    """Single-channel intensity grid with values clamped to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionError(f"guidance image must be a non-empty 2-D grid, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise DataError("guidance image contains non-finite values")
        np.clip(arr, 0.0, 1.0, out=arr)
        arr.flags.writeable = False
        self.values = arr

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def check_scale_factor(factor: int) -> int:
    """Validate an up/down-sampling factor (integer >= 2)."""
    if int(factor) != factor or factor < 2:
        raise DimensionError(f"scale factor must be an integer >= 2, got {factor!r}")
    return int(factor)


# ---------------------------------------------------------------------------
# PFM / PGM codecs
# ---------------------------------------------------------------------------

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _read_token(buf: bytes, pos: int, *, skip_comments: bool) -> tuple[bytes, int]:
    """Return the next whitespace-delimited token and the position just past it."""
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if skip_comments and c == b"#":
            while pos < n and buf[pos : pos + 1] != b"\n":
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of header")
    return buf[start:pos], pos


def _parse_pfm(buf: bytes) -> DepthMap:
    pos = 2  # past magic
    try:
        w_tok, pos = _read_token(buf, pos, skip_comments=False)
        h_tok, pos = _read_token(buf, pos, skip_comments=False)
        s_tok, pos = _read_token(buf, pos, skip_comments=False)
        width, height = int(w_tok), int(h_tok)
        scale_line = float(s_tok)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"bad PFM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PFM dimensions {width}x{height}")
    if scale_line == 0.0:
        raise FormatError("PFM scale line must be nonzero")
    pos += 1  # single whitespace byte separates header from raster
    dtype = "<f4" if scale_line < 0 else ">f4"
    expected = width * height * 4
    raster = buf[pos : pos + expected]
    if len(raster) != expected:
        raise FormatError(f"PFM raster truncated: expected {expected} bytes, got {len(raster)}")
    data = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    data = np.flipud(data).astype(np.float64)  # PFM rows are stored bottom-up
    if not np.isfinite(data).all():
        raise DataError("PFM contains non-finite values")
    return DepthMap(values=data, scale=abs(scale_line))


def _parse_pgm(buf: bytes, magic: bytes) -> DepthMap:
    pos = 2
    try:
        w_tok, pos = _read_token(buf, pos, skip_comments=True)
        h_tok, pos = _read_token(buf, pos, skip_comments=True)
        m_tok, pos = _read_token(buf, pos, skip_comments=True)
        width, height, maxval = int(w_tok), int(h_tok), int(m_tok)
    except (ValueError, FormatError) as exc:
        raise FormatError(f"bad PGM header: {exc}") from exc
    if width <= 0 or height <= 0:
        raise FormatError(f"bad PGM dimensions {width}x{height}")
    if not (0 < maxval <= 65535):
        raise FormatError(f"bad PGM maxval {maxval}")
    npix = width * height
    if magic == b"P2":
        try:
            codes = np.array(buf[pos:].split()[:npix], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"bad ASCII PGM sample: {exc}") from exc
        if codes.size != npix:
            raise FormatError(f"ASCII PGM truncated: expected {npix} samples, got {codes.size}")
    else:
        pos += 1
        dtype = ">u2" if maxval > 255 else "u1"
        nbytes = npix * (2 if maxval > 255 else 1)
        raster = buf[pos : pos + nbytes]
        if len(raster) != nbytes:
            raise FormatError(f"PGM raster truncated: expected {nbytes} bytes, got {len(raster)}")
        codes = np.frombuffer(raster, dtype=dtype).astype(np.float64)
    codes = codes.reshape(height, width)
    if codes.max(initial=0.0) > maxval:
        raise FormatError("PGM sample exceeds maxval")
    return DepthMap(values=codes / maxval, scale=float(maxval))


def load_depth(path) -> DepthMap:
    """Load a depth map from a PFM ('Pf') or PGM ('P2'/'P5') file.

    PFM data is kept as-is, scale taken from the header magnitude.  PGM codes
    become depth in [0, 1] by division with maxval, recorded as the scale.
    """
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    magic = buf[:2]
    if magic == b"Pf":
        return _parse_pfm(buf)
    if magic in (b"P2", b"P5"):
        return _parse_pgm(buf, magic)
    raise FormatError(f"unsupported magic {magic!r} in {path}")


def save_depth(depth: DepthMap, path, format: str = "pfm") -> None:
    """Write a depth map as little-endian PFM or as 16-bit PGM.

    pgm16 quantizes linearly over [min, max] to the 0..65535 code range; a
    constant map quantizes to all-zero codes.
    """
    path = Path(path)
    if format == "pfm":
        data = np.flipud(depth.values).astype("<f4")
        # negative scale line = little-endian; magnitude preserves depth.scale
        header = f"Pf\n{depth.width} {depth.height}\n{-depth.scale}\n".encode("ascii")
        payload = header + data.tobytes()
    elif format == "pgm16":
        lo = float(depth.values.min())
        hi = float(depth.values.max())
        if hi > lo:
            codes = np.rint((depth.values - lo) / (hi - lo) * 65535.0)
        else:
            codes = np.zeros_like(depth.values)
        header = f"P5\n{depth.width} {depth.height}\n65535\n".encode("ascii")
        payload = header + codes.astype(">u2").tobytes()
    else:
        raise FormatError(f"unsupported save format {format!r}")
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Guidance images
# ---------------------------------------------------------------------------

_LUMA = np.array([0.299, 0.587, 0.114])


def guidance_from_color(color: np.ndarray) -> GuidanceImage:
    """Convert an 8-bit RGB image (h, w, 3) to a [0, 1] intensity guidance."""
    arr = np.asarray(color, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"expected a non-empty (h, w, 3) color image, got shape {arr.shape}")
    luma = arr @ _LUMA / 255.0
    return GuidanceImage(values=luma)


def guidance_from_depth(depth: DepthMap) -> GuidanceImage:
    """Rescale a depth map linearly to [0, 1]; a constant map maps to all 0.5."""
    lo = float(depth.values.min())
    hi = float(depth.values.max())
    if hi > lo:
        vals = (depth.values - lo) / (hi - lo)
    else:
        vals = np.full(depth.shape, 0.5)
    return GuidanceImage(values=vals)


def load_guidance(path) -> GuidanceImage:
    """Load a guidance image from an 8-bit PNG (RGB or grayscale)."""
    from PIL import Image, UnidentifiedImageError

    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode in ("RGB", "RGBA"):
                arr = np.asarray(img.convert("RGB"), dtype=np.float64)
                return guidance_from_color(arr)
            arr = np.asarray(img.convert("L"), dtype=np.float64)
    except FileNotFoundError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    except UnidentifiedImageError as exc:
        raise FormatError(f"not a readable image: {path}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise DimensionError(f"guidance image must be non-empty 2-D, got shape {arr.shape}")
    return GuidanceImage(values=arr / 255.0)
