"""Self-contained PNG encoder tuned for tile payloads.

Pillow's PNG writer always emits 8-bit truecolor for RGB input, which wastes
space on the constant-color tiles this package cares about (an all-white
512x512 tile costs ~1.5 kB that way because DEFLATE spends ~4 bits per
258-byte match run).  This encoder picks the cheapest valid representation:

* indexed color (color type 3) at bit depth 1/2/4/8 when the image has at
  most 256 distinct colors -- a constant tile then packs 8 pixels per byte
  and compresses to a few hundred bytes;
* 8-bit truecolor (color type 2) otherwise, with the standard adaptive
  per-row filter search (minimum sum of absolute differences).

Output is a baseline, non-interlaced PNG that any compliant reader
(including Pillow) decodes back bit-exactly.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload))
    )


def _filter_scanlines(rows: np.ndarray, bytes_per_pixel: int) -> bytes:
    """Apply the adaptive scanline filter search to raw row bytes.

    Args:
        rows: ``(height, row_bytes)`` uint8 array of unfiltered scanlines.
        bytes_per_pixel: filter unit in bytes (3 for RGB8, 1 for indexed
            or grayscale data).

    Returns:
        The serialized filtered scanlines (filter byte + row data each).
    """
    raw = rows.astype(np.int16)
    h, _ = raw.shape
    up = np.zeros_like(raw)
    up[1:] = raw[:-1]
    left = np.zeros_like(raw)
    left[:, bytes_per_pixel:] = raw[:, :-bytes_per_pixel]
    upleft = np.zeros_like(raw)
    upleft[1:, bytes_per_pixel:] = raw[:-1, :-bytes_per_pixel]

    estimate = left + up - upleft
    dist_left = np.abs(estimate - left)
    dist_up = np.abs(estimate - up)
    dist_upleft = np.abs(estimate - upleft)
    paeth = np.where(
        (dist_left <= dist_up) & (dist_left <= dist_upleft),
        left,
        np.where(dist_up <= dist_upleft, up, upleft),
    )

    candidates = np.stack(
        [
            raw,
            raw - left,
            raw - up,
            raw - ((left + up) >> 1),
            raw - paeth,
        ]
    ).astype(np.uint8)
    # Minimum sum of absolute values, treating filtered bytes as signed.
    cost = np.abs(candidates.astype(np.int8).astype(np.int32)).sum(axis=2)
    choice = cost.argmin(axis=0)
    filtered = candidates[choice, np.arange(h)]
    return np.concatenate(
        [choice[:, None].astype(np.uint8), filtered], axis=1
    ).tobytes()


def _pack_indices(indices: np.ndarray, bit_depth: int) -> np.ndarray:
    """Pack per-pixel palette indices into scanline bytes at *bit_depth*."""
    if bit_depth == 8:
        return indices
    h, w = indices.shape
    per_byte = 8 // bit_depth
    padded_w = -(-w // per_byte) * per_byte
    padded = np.zeros((h, padded_w), np.uint8)
    padded[:, :w] = indices
    packed = np.zeros((h, padded_w // per_byte), np.uint8)
    for i in range(per_byte):
        packed |= padded[:, i::per_byte] << (8 - bit_depth * (i + 1))
    return packed


def _encode_indexed(image: np.ndarray, level: int) -> bytes | None:
    """Encode as color type 3 if the image has <= 256 distinct colors."""
    h, w, _ = image.shape
    flat = image.reshape(-1, 3)
    packed = (
        flat[:, 0].astype(np.uint32) << 16
        | flat[:, 1].astype(np.uint32) << 8
        | flat[:, 2].astype(np.uint32)
    )
    colors, inverse = np.unique(packed, return_inverse=True)
    if colors.size > 256:
        return None
    if colors.size <= 2:
        bit_depth = 1
    elif colors.size <= 4:
        bit_depth = 2
    elif colors.size <= 16:
        bit_depth = 4
    else:
        bit_depth = 8
    indices = inverse.astype(np.uint8).reshape(h, w)
    rows = _pack_indices(indices, bit_depth)
    scanlines = _filter_scanlines(rows, 1)
    palette = np.zeros((colors.size, 3), np.uint8)
    palette[:, 0] = colors >> 16
    palette[:, 1] = colors >> 8
    palette[:, 2] = colors
    header = struct.pack(">IIBBBBB", w, h, bit_depth, 3, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", header)
        + _chunk(b"PLTE", palette.tobytes())
        + _chunk(b"IDAT", zlib.compress(scanlines, level))
        + _chunk(b"IEND", b"")
    )


def encode_rgb(image: np.ndarray, level: int = 9) -> bytes:
    """Encode an ``(h, w, 3)`` uint8 array as a lossless PNG.

    Args:
        image: pixel data, height x width x RGB.
        level: zlib compression level, 0-9.

    Returns:
        The complete PNG file contents.
    """
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(f"expected (h, w, 3) uint8 array, got {image.shape} {image.dtype}")
    h, w, _ = image.shape
    if h == 0 or w == 0:
        raise ValueError("image dimensions must be positive")
    indexed = _encode_indexed(image, level)
    if indexed is not None:
        return indexed
    rows = image.reshape(h, w * 3)
    scanlines = _filter_scanlines(rows, 3)
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(scanlines, level))
        + _chunk(b"IEND", b"")
    )


def encode_gray(image: np.ndarray, text: dict[str, str] | None = None, level: int = 9) -> bytes:
    """Encode an ``(h, w)`` uint8 array as an 8-bit grayscale PNG.

    Args:
        image: pixel data, height x width.
        text: optional key/value pairs stored as tEXt chunks (latin-1).
        level: zlib compression level, 0-9.

    Returns:
        The complete PNG file contents.
    """
    if image.ndim != 2 or image.dtype != np.uint8:
        raise ValueError(f"expected (h, w) uint8 array, got {image.shape} {image.dtype}")
    h, w = image.shape
    if h == 0 or w == 0:
        raise ValueError("image dimensions must be positive")
    scanlines = _filter_scanlines(image, 1)
    header = struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0)
    out = _SIGNATURE + _chunk(b"IHDR", header)
    for key, value in (text or {}).items():
        out += _chunk(b"tEXt", key.encode("latin-1") + b"\x00" + value.encode("latin-1"))
    out += _chunk(b"IDAT", zlib.compress(scanlines, level))
    out += _chunk(b"IEND", b"")
    return out
