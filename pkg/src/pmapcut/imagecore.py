"""Core raster types, rectangle geometry, and bit-exact file I/O.

File formats:
  images   PNG (8-bit RGB/RGBA, alpha discarded) and binary PPM (P6, maxval 255)
  P-maps   16-bit PGM (P5, maxval 65535; value = sample / maxval) or the raw
           float format: magic "PMAPF32\\0", width and height as little-endian
           uint32, then width*height little-endian float32, row-major
  masks    PGM P5 maxval 255, foreground 255 / background 0
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import pngio
from .errors import (
    CorruptData,
    DimensionMismatch,
    IoFailure,
    NotFound,
    OutOfBounds,
    UnsupportedFormat,
    ValueOutOfRange,
)

PMAP_MAGIC = b"PMAPF32\x00"
PMAP_TOLERANCE = 1e-9
PGM_MAXVAL = 65535


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Dense 8-bit color raster, shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueOutOfRange("RgbImage needs an (h, w, 3) array with h, w >= 1")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, RgbImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Per-pixel foreground probability in [0, 1], float32, shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueOutOfRange("ProbMap needs an (h, w) array with h, w >= 1")
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > 1.0:
            raise ValueOutOfRange("ProbMap values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, ProbMap) and np.array_equal(self.values, other.values)


@dataclass(frozen=True, eq=False)
class CutoutMask:
    """Binary foreground/background labeling, bool, shape (height, width)."""

    labels: np.ndarray

    def __post_init__(self):
        lb = np.asarray(self.labels)
        if lb.dtype != np.bool_:
            lb = lb.astype(bool)
        if lb.ndim != 2 or lb.shape[0] < 1 or lb.shape[1] < 1:
            raise ValueOutOfRange("CutoutMask needs an (h, w) array with h, w >= 1")
        object.__setattr__(self, "labels", _freeze(lb))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def fg_count(self) -> int:
        return int(self.labels.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, CutoutMask) and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class RectProposal:
    """Axis-aligned rectangle: integer pixel units, top-left origin,
    exclusive right/bottom edge."""

    x: int
    y: int
    w: int
    h: int
    confidence: float | None = field(default=None)

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueOutOfRange(f"rect {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.w < 1 or self.h < 1:
            raise ValueOutOfRange(f"rect extent must be >= 1, got {self.w}x{self.h}")
        if self.confidence is not None:
            c = float(self.confidence)
            if not np.isfinite(c) or c < 0:
                raise ValueOutOfRange("rect confidence must be finite and >= 0")
            object.__setattr__(self, "confidence", c)

    @property
    def area(self) -> int:
        return self.w * self.h

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height


def rect_iou(a: RectProposal, b: RectProposal) -> float:
    """Intersection area over union area; 0 when disjoint."""
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / float(a.area + b.area - inter)


def crop(raster: RgbImage | ProbMap | CutoutMask, rect: RectProposal):
    """Copy the rect region out of a raster; the rect must lie fully inside."""
    if not rect.inside(raster.width, raster.height):
        raise OutOfBounds(
            f"rect {rect.x},{rect.y},{rect.w},{rect.h} exceeds {raster.width}x{raster.height} raster"
        )
    sl = (slice(rect.y, rect.y + rect.h), slice(rect.x, rect.x + rect.w))
    if isinstance(raster, RgbImage):
        return RgbImage(raster.pixels[sl].copy())
    if isinstance(raster, ProbMap):
        return ProbMap(raster.values[sl].copy())
    if isinstance(raster, CutoutMask):
        return CutoutMask(raster.labels[sl].copy())
    raise TypeError(f"cannot crop {type(raster).__name__}")


# ---------------------------------------------------------------------------
# netpbm parsing


def _read_file(path) -> bytes:
    p = Path(path)
    if not p.exists():
        raise NotFound(f"no such file: {p}")
    try:
        return p.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {p}: {exc}") from exc


def _parse_pnm_header(data: bytes, magic: bytes):
    """Return (width, height, maxval, offset of first sample byte)."""
    if not data.startswith(magic):
        raise CorruptData(f"expected {magic!r} header")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in (10, 13):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptData("truncated netpbm header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise CorruptData(f"bad netpbm header field {data[start:pos]!r}") from exc
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise CorruptData("netpbm header not followed by whitespace")
    width, height, maxval = fields
    if width < 1 or height < 1 or maxval < 1 or maxval > 65535:
        raise CorruptData(f"bad netpbm dimensions {width}x{height} maxval {maxval}")
    return width, height, maxval, pos + 1


def decode_image(data: bytes, origin: str = "<bytes>") -> RgbImage:
    """Decode PNG or binary PPM (P6) bytes."""
    if len(data) == 0:
        raise CorruptData(f"empty file: {origin}")
    if data.startswith(pngio.SIGNATURE):
        return RgbImage(pngio.decode(data))
    if data.startswith(b"P6"):
        w, h, maxval, off = _parse_pnm_header(data, b"P6")
        if maxval != 255:
            raise UnsupportedFormat(f"PPM maxval {maxval} not supported (need 255)")
        need = w * h * 3
        raw = data[off : off + need]
        if len(raw) != need:
            raise CorruptData("PPM pixel data truncated")
        return RgbImage(np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3))
    if data.startswith(b"P5"):
        raise UnsupportedFormat("grayscale PGM is not an image format here (use load_pmap/load_mask)")
    if data[:1] == b"P" and data[1:2] in b"1234":
        raise UnsupportedFormat("ASCII netpbm variants are not supported")
    raise CorruptData(f"unrecognized image data in {origin}")


def load_image(path) -> RgbImage:
    """Load a PNG or binary PPM (P6) image."""
    return decode_image(_read_file(path), origin=str(path))


def save_image(image: RgbImage, path) -> None:
    """Write PNG (default) or PPM P6 when the path ends in .ppm."""
    p = Path(path)
    try:
        if p.suffix.lower() == ".ppm":
            header = f"P6\n{image.width} {image.height}\n255\n".encode()
            p.write_bytes(header + image.pixels.tobytes())
        else:
            p.write_bytes(pngio.encode(image.pixels))
    except OSError as exc:
        raise IoFailure(f"cannot write {p}: {exc}") from exc


def decode_pmap(data: bytes, origin: str = "<bytes>") -> ProbMap:
    """Decode a P-map from 16-bit PGM or raw-float bytes."""
    if data.startswith(PMAP_MAGIC):
        if len(data) < 16:
            raise CorruptData("raw-float P-map truncated header")
        w, h = struct.unpack("<II", data[8:16])
        if w < 1 or h < 1:
            raise CorruptData("raw-float P-map with zero dimension")
        need = w * h * 4
        if len(data) != 16 + need:
            raise CorruptData("raw-float P-map payload has wrong length")
        vals = np.frombuffer(data, dtype="<f4", offset=16).reshape(h, w)
        if not np.isfinite(vals).all():
            raise ValueOutOfRange("raw-float P-map contains non-finite values")
        lo, hi = float(vals.min()), float(vals.max())
        if lo < -PMAP_TOLERANCE or hi > 1.0 + PMAP_TOLERANCE:
            raise ValueOutOfRange(f"raw-float P-map values outside [0,1]: [{lo}, {hi}]")
        return ProbMap(np.clip(vals, 0.0, 1.0))
    if data.startswith(b"P5"):
        w, h, maxval, off = _parse_pnm_header(data, b"P5")
        nbytes = 2 if maxval > 255 else 1
        need = w * h * nbytes
        raw = data[off : off + need]
        if len(raw) != need:
            raise CorruptData("PGM sample data truncated")
        dtype = ">u2" if nbytes == 2 else np.uint8
        samples = np.frombuffer(raw, dtype=dtype).reshape(h, w)
        return ProbMap(samples.astype(np.float64) / maxval)
    raise UnsupportedFormat(f"not a P-map file: {origin}")


def load_pmap(path) -> ProbMap:
    """Load a P-map from 16-bit PGM or the raw-float format."""
    return decode_pmap(_read_file(path), origin=str(path))


def save_pmap(pmap: ProbMap, path, fmt: str | None = None) -> None:
    """Write a P-map.

    fmt "pgm" stores round(p * 65535) as 16-bit PGM (round trip within
    1/65535); fmt "f32" stores the raw-float format (exact round trip).
    Default: by file suffix, .pgm -> pgm, anything else -> f32.
    """
    p = Path(path)
    if fmt is None:
        fmt = "pgm" if p.suffix.lower() == ".pgm" else "f32"
    try:
        if fmt == "pgm":
            samples = np.rint(pmap.values.astype(np.float64) * PGM_MAXVAL).astype(">u2")
            header = f"P5\n{pmap.width} {pmap.height}\n{PGM_MAXVAL}\n".encode()
            p.write_bytes(header + samples.tobytes())
        elif fmt == "f32":
            head = PMAP_MAGIC + struct.pack("<II", pmap.width, pmap.height)
            p.write_bytes(head + pmap.values.astype("<f4").tobytes())
        else:
            raise ValueOutOfRange(f"unknown P-map format {fmt!r}")
    except OSError as exc:
        raise IoFailure(f"cannot write {p}: {exc}") from exc


def decode_mask(data: bytes, origin: str = "<bytes>") -> CutoutMask:
    """Decode a binary mask from PGM P5 bytes (nonzero = foreground)."""
    if not data.startswith(b"P5"):
        raise UnsupportedFormat(f"not a PGM mask file: {origin}")
    w, h, maxval, off = _parse_pnm_header(data, b"P5")
    nbytes = 2 if maxval > 255 else 1
    need = w * h * nbytes
    raw = data[off : off + need]
    if len(raw) != need:
        raise CorruptData("PGM mask data truncated")
    dtype = ">u2" if nbytes == 2 else np.uint8
    samples = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    return CutoutMask(samples > 0)


def load_mask(path) -> CutoutMask:
    """Load a binary mask from PGM P5 (nonzero = foreground)."""
    return decode_mask(_read_file(path), origin=str(path))


def save_mask(mask: CutoutMask, path) -> None:
    """Write a mask as PGM P5 maxval 255, FG=255 / BG=0."""
    p = Path(path)
    samples = np.where(mask.labels, 255, 0).astype(np.uint8)
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode()
    try:
        p.write_bytes(header + samples.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {p}: {exc}") from exc


def mask_bytes(mask: CutoutMask) -> bytes:
    """Mask serialized as PGM bytes (wire format for the HTTP service)."""
    samples = np.where(mask.labels, 255, 0).astype(np.uint8)
    return f"P5\n{mask.width} {mask.height}\n255\n".encode() + samples.tobytes()


def pmap_bytes(pmap: ProbMap) -> bytes:
    """P-map serialized as 16-bit PGM bytes."""
    samples = np.rint(pmap.values.astype(np.float64) * PGM_MAXVAL).astype(">u2")
    return f"P5\n{pmap.width} {pmap.height}\n{PGM_MAXVAL}\n".encode() + samples.tobytes()


def require_same_shape(a, b, what: str = "rasters") -> None:
    if a.width != b.width or a.height != b.height:
        raise DimensionMismatch(
            f"{what} differ: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
