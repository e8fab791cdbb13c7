"""Minimal PNG codec: decodes 8-bit RGB/RGBA (alpha discarded), encodes 8-bit RGB.

Deliberately narrow — 16-bit, palette, grayscale and interlaced files are
rejected rather than half-supported. Chunk CRCs are verified.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import CorruptData, UnsupportedFormat

SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: bytes, width: int, height: int, bpp: int) -> np.ndarray:
    stride = width * bpp
    if len(raw) != height * (stride + 1):
        raise CorruptData("decompressed PNG data has wrong length")
    out = np.zeros((height, stride), dtype=np.uint8)
    raw_arr = np.frombuffer(raw, dtype=np.uint8)
    for y in range(height):
        ftype = raw_arr[y * (stride + 1)]
        line = raw_arr[y * (stride + 1) + 1 : (y + 1) * (stride + 1)].astype(np.int64)
        prev = out[y - 1].astype(np.int64) if y > 0 else np.zeros(stride, dtype=np.int64)
        if ftype == 0:
            out[y] = line
        elif ftype == 1:  # Sub: cumulative within each byte lane
            cur = line.copy()
            for x in range(bpp, stride):
                cur[x] = (cur[x] + cur[x - bpp]) & 0xFF
            out[y] = cur
        elif ftype == 2:  # Up
            out[y] = (line + prev) & 0xFF
        elif ftype == 3:  # Average
            cur = line.copy()
            for x in range(stride):
                left = cur[x - bpp] if x >= bpp else 0
                cur[x] = (cur[x] + ((left + prev[x]) >> 1)) & 0xFF
            out[y] = cur
        elif ftype == 4:  # Paeth
            cur = line.copy()
            for x in range(stride):
                left = int(cur[x - bpp]) if x >= bpp else 0
                upleft = int(prev[x - bpp]) if x >= bpp else 0
                cur[x] = (cur[x] + _paeth(left, int(prev[x]), upleft)) & 0xFF
            out[y] = cur
        else:
            raise CorruptData(f"unknown PNG filter type {ftype}")
    return out


def decode(data: bytes) -> np.ndarray:
    """Decode PNG bytes to an (h, w, 3) uint8 array."""
    if len(data) < 8 or data[:8] != SIGNATURE:
        raise CorruptData("missing PNG signature")
    pos = 8
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        length, ctype = struct.unpack(">I4s", data[pos : pos + 8])
        chunk = data[pos + 8 : pos + 8 + length]
        if len(chunk) != length or pos + 12 + length > len(data):
            raise CorruptData("truncated PNG chunk")
        crc = struct.unpack(">I", data[pos + 8 + length : pos + 12 + length])[0]
        if zlib.crc32(ctype + chunk) & 0xFFFFFFFF != crc:
            raise CorruptData(f"bad CRC in {ctype!r} chunk")
        if ctype == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", chunk)
        elif ctype == b"IDAT":
            idat.extend(chunk)
        elif ctype == b"IEND":
            break
        pos += 12 + length
    if ihdr is None:
        raise CorruptData("PNG without IHDR")
    width, height, depth, color, comp, filt, interlace = ihdr
    if width < 1 or height < 1:
        raise CorruptData("PNG with zero dimension")
    if depth == 16:
        raise UnsupportedFormat("16-bit PNGs are not supported")
    if depth != 8 or color not in (2, 6):
        raise UnsupportedFormat(
            f"only 8-bit RGB/RGBA PNGs are supported (depth={depth}, color type={color})"
        )
    if comp != 0 or filt != 0 or interlace != 0:
        raise UnsupportedFormat("interlaced or nonstandard PNGs are not supported")
    if not idat:
        raise CorruptData("PNG without IDAT")
    try:
        raw = zlib.decompress(bytes(idat))
    except zlib.error as exc:
        raise CorruptData(f"broken PNG pixel stream: {exc}") from exc
    bpp = 3 if color == 2 else 4
    flat = _unfilter(raw, width, height, bpp)
    pixels = flat.reshape(height, width, bpp)
    return np.ascontiguousarray(pixels[:, :, :3])


def encode(pixels: np.ndarray) -> bytes:
    """Encode an (h, w, 3) uint8 array as an RGB PNG."""
    h, w, _ = pixels.shape
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    rows = bytearray()
    for y in range(h):
        rows.append(0)
        rows.extend(pixels[y].tobytes())
    out = bytearray(SIGNATURE)
    for ctype, chunk in ((b"IHDR", header), (b"IDAT", zlib.compress(bytes(rows), 6)), (b"IEND", b"")):
        out.extend(struct.pack(">I", len(chunk)))
        out.extend(ctype)
        out.extend(chunk)
        out.extend(struct.pack(">I", zlib.crc32(ctype + chunk) & 0xFFFFFFFF))
    return bytes(out)
