"""Tiled multi-resolution TIFF pyramids: value model, reader, writer.

The on-disk format is classic little-endian TIFF 6.0 with one IFD per
pyramid level, highest resolution first.  Pixel data lives in square-ish
tiles whose dimensions are multiples of 16 (a TIFF requirement).  Each tile
is an independently decodable compressed stream; a tile with
``TileByteCounts == 0`` and ``TileOffsets == 0`` is an *empty* tile that
readers must materialize as the slide background color without touching the
file.  Level 0's ``ImageDescription`` carries the background color and base
magnification as ``background=RRGGBB;magnification=40``.

Out of scope by design: BigTIFF, big-endian files, stripped layouts
(rejected with :class:`~wsipack.errors.NotTiled`), planar-separated or
non-8-bit-RGB data, and vendor metadata blocks.
"""

from __future__ import annotations

import re
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codecs
from .codecs import CodecFamily, CodecSpec
from .errors import (
    CorruptDirectory,
    DecodeFailure,
    InvalidLevel,
    IoFailure,
    MagnificationUnavailable,
    NotTiled,
    UnsupportedCodec,
)

__all__ = [
    "PyramidLevel",
    "TiledPyramid",
    "TileRef",
    "level_for_magnification",
    "open_pyramid",
    "pyramid_payload_bytes",
    "write_pyramid",
]

# TIFF tag numbers used by this format.
_TAG_SUBFILE_TYPE = 254
_TAG_WIDTH = 256
_TAG_LENGTH = 257
_TAG_BITS_PER_SAMPLE = 258
_TAG_COMPRESSION = 259
_TAG_PHOTOMETRIC = 262
_TAG_DESCRIPTION = 270
_TAG_STRIP_OFFSETS = 273
_TAG_SAMPLES_PER_PIXEL = 277
_TAG_ROWS_PER_STRIP = 278
_TAG_PLANAR_CONFIG = 284
_TAG_SOFTWARE = 305
_TAG_TILE_WIDTH = 322
_TAG_TILE_LENGTH = 323
_TAG_TILE_OFFSETS = 324
_TAG_TILE_BYTE_COUNTS = 325

_TYPE_BYTE = 1
_TYPE_ASCII = 2
_TYPE_SHORT = 3
_TYPE_LONG = 4
_TYPE_RATIONAL = 5
_TYPE_UNDEFINED = 7
_TYPE_SIZES = {
    _TYPE_BYTE: 1,
    _TYPE_ASCII: 1,
    _TYPE_SHORT: 2,
    _TYPE_LONG: 4,
    _TYPE_RATIONAL: 8,
    _TYPE_UNDEFINED: 1,
}

_COMPRESSION_TO_FAMILY = {
    7: CodecFamily.JPEG,       # new-style JPEG: tiles hold JFIF streams
    34933: CodecFamily.PNG,
    33003: CodecFamily.JPEG_2000,
    33005: CodecFamily.JPEG_2000,
    50002: CodecFamily.JPEG_XL,
}
_FAMILY_TO_COMPRESSION = {
    CodecFamily.JPEG: 7,
    CodecFamily.PNG: 34933,
    CodecFamily.JPEG_2000: 33005,
    CodecFamily.JPEG_XL: 50002,
}

_SOFTWARE = "wsipack 0.1.0"
_DECODE_CACHE_TILES = 64


@dataclass(frozen=True, order=True)
class TileRef:
    """Address of one tile: pyramid level plus tile-grid column and row."""

    level: int
    col: int
    row: int


@dataclass(frozen=True)
class PyramidLevel:
    """Geometry of one pyramid level.

    ``downsample`` is the factor relative to level 0 (1.0 there, strictly
    increasing down the pyramid) and ``magnification`` the objective power
    the level corresponds to (base magnification / downsample).
    """

    index: int
    width_px: int
    height_px: int
    tile_w: int
    tile_h: int
    downsample: float
    magnification: float

    @property
    def tiles_across(self) -> int:
        return -(-self.width_px // self.tile_w)

    @property
    def tiles_down(self) -> int:
        return -(-self.height_px // self.tile_h)

    @property
    def tile_count(self) -> int:
        return self.tiles_across * self.tiles_down


@dataclass
class TiledPyramid:
    """An in-memory pyramid: level geometry plus per-tile encoded payloads.

    ``tiles`` maps every :class:`TileRef` of every level to either the
    tile's compressed payload bytes or ``None`` for an empty tile.  All
    payloads share one codec family (``tile_codec``).
    """

    base_magnification: float
    background_color: tuple[int, int, int]
    tile_codec: CodecSpec
    levels: tuple[PyramidLevel, ...]
    tiles: dict[TileRef, bytes | None]
    _decoded: OrderedDict = field(default_factory=OrderedDict, repr=False, compare=False)
    _cache_lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def validate(self) -> None:
        """Check the value-model invariants; raise ValueError on violation."""
        if self.base_magnification <= 0:
            raise ValueError(f"base magnification must be positive, got {self.base_magnification}")
        if len(self.background_color) != 3 or not all(
            0 <= c <= 255 for c in self.background_color
        ):
            raise ValueError(f"bad background color {self.background_color!r}")
        if not self.levels:
            raise ValueError("pyramid has no levels")
        prev = 0.0
        for i, lvl in enumerate(self.levels):
            if lvl.index != i:
                raise ValueError(f"level {i} has index {lvl.index}")
            if lvl.width_px <= 0 or lvl.height_px <= 0:
                raise ValueError(f"level {i} has empty extent {lvl.width_px}x{lvl.height_px}")
            if lvl.tile_w <= 0 or lvl.tile_h <= 0 or lvl.tile_w % 16 or lvl.tile_h % 16:
                raise ValueError(
                    f"level {i} tile size {lvl.tile_w}x{lvl.tile_h} must be a positive multiple of 16"
                )
            if lvl.downsample <= prev:
                raise ValueError("level downsamples must increase strictly")
            if i == 0 and lvl.downsample != 1.0:
                raise ValueError(f"level 0 downsample must be 1.0, got {lvl.downsample}")
            prev = lvl.downsample
        expected = {
            TileRef(lvl.index, c, r)
            for lvl in self.levels
            for r in range(lvl.tiles_down)
            for c in range(lvl.tiles_across)
        }
        if set(self.tiles) != expected:
            missing = expected - set(self.tiles)
            extra = set(self.tiles) - expected
            raise ValueError(
                f"tile map does not match level grids ({len(missing)} missing, {len(extra)} extra)"
            )
        for ref, payload in self.tiles.items():
            if payload is not None and len(payload) == 0:
                raise ValueError(f"present tile {ref} has an empty payload; use None for empty tiles")

    def level(self, index: int) -> PyramidLevel:
        """Return the geometry of level *index*."""
        if not 0 <= index < len(self.levels):
            raise InvalidLevel(f"level {index} out of range (pyramid has {len(self.levels)} levels)")
        return self.levels[index]

    def iter_tiles(self, level: int):
        """Yield the level's tile refs in row-major order."""
        lvl = self.level(level)
        for row in range(lvl.tiles_down):
            for col in range(lvl.tiles_across):
                yield TileRef(level, col, row)

    def tile_payload(self, ref: TileRef) -> bytes | None:
        """Return the stored payload for *ref* (None for an empty tile)."""
        lvl = self.level(ref.level)
        if not (0 <= ref.col < lvl.tiles_across and 0 <= ref.row < lvl.tiles_down):
            raise ValueError(f"tile {ref} outside the {lvl.tiles_across}x{lvl.tiles_down} grid")
        return self.tiles[ref]

    def read_tile(self, ref: TileRef) -> np.ndarray:
        """Decode one tile to ``(tile_h, tile_w, 3)`` uint8 pixels.

        Empty tiles decode to the background color without touching any
        payload.  Decoded tiles are cached (small LRU) because neighboring
        patch reads revisit tiles.
        """
        lvl = self.level(ref.level)
        payload = self.tile_payload(ref)
        if payload is None:
            return np.full((lvl.tile_h, lvl.tile_w, 3), self.background_color, np.uint8)
        with self._cache_lock:
            cached = self._decoded.get(ref)
            if cached is not None:
                self._decoded.move_to_end(ref)
                return cached
        image = codecs.decode_payload(payload, self.tile_codec.family)
        if image.shape != (lvl.tile_h, lvl.tile_w, 3):
            raise DecodeFailure(
                f"tile {ref} decoded to {image.shape[1]}x{image.shape[0]}, "
                f"expected {lvl.tile_w}x{lvl.tile_h}"
            )
        image.setflags(write=False)
        with self._cache_lock:
            self._decoded[ref] = image
            if len(self._decoded) > _DECODE_CACHE_TILES:
                self._decoded.popitem(last=False)
        return image

    def read_region(self, level: int, x: int, y: int, w: int, h: int) -> np.ndarray:
        """Read a ``(h, w, 3)`` region at level coordinates ``(x, y)``.

        The region may extend past the image extent; pixels outside it (and
        pixels of empty tiles) come back as the background color.
        """
        lvl = self.level(level)
        if w <= 0 or h <= 0:
            raise ValueError(f"region size must be positive, got {w}x{h}")
        if x < 0 or y < 0:
            raise ValueError(f"region origin must be non-negative, got ({x}, {y})")
        out = np.full((h, w, 3), self.background_color, np.uint8)
        if x >= lvl.width_px or y >= lvl.height_px:
            return out
        col0, col1 = x // lvl.tile_w, min((x + w - 1) // lvl.tile_w, lvl.tiles_across - 1)
        row0, row1 = y // lvl.tile_h, min((y + h - 1) // lvl.tile_h, lvl.tiles_down - 1)
        for row in range(row0, row1 + 1):
            ty = row * lvl.tile_h
            for col in range(col0, col1 + 1):
                tx = col * lvl.tile_w
                ref = TileRef(level, col, row)
                if self.tiles[ref] is None:
                    continue  # already background
                x0 = max(x, tx)
                y0 = max(y, ty)
                x1 = min(x + w, tx + lvl.tile_w, lvl.width_px)
                y1 = min(y + h, ty + lvl.tile_h, lvl.height_px)
                if x1 <= x0 or y1 <= y0:
                    continue
                tile = self.read_tile(ref)
                out[y0 - y : y1 - y, x0 - x : x1 - x] = tile[y0 - ty : y1 - ty, x0 - tx : x1 - tx]
        return out

    def tile_status_counts(self) -> dict[str, int]:
        """Count present vs empty tiles across all levels."""
        present = sum(1 for p in self.tiles.values() if p is not None)
        return {"present": present, "empty": len(self.tiles) - present}


def pyramid_payload_bytes(pyramid: TiledPyramid) -> int:
    """Total encoded tile bytes (excluding TIFF structural overhead)."""
    return sum(len(p) for p in pyramid.tiles.values() if p is not None)


def level_for_magnification(
    pyramid: TiledPyramid, magnification: float, rel_tol: float = 0.25
) -> int:
    """Index of the level whose magnification is nearest the request.

    Raises :class:`~wsipack.errors.MagnificationUnavailable` when even the
    nearest level deviates by more than ``rel_tol`` (relative).
    """
    if magnification <= 0:
        raise ValueError(f"magnification must be positive, got {magnification}")
    best = min(pyramid.levels, key=lambda lvl: abs(lvl.magnification - magnification))
    if abs(best.magnification - magnification) > rel_tol * magnification:
        raise MagnificationUnavailable(
            f"no level within {rel_tol:.0%} of x{magnification:g} "
            f"(nearest is x{best.magnification:g})"
        )
    return best.index


# --------------------------------------------------------------------------
# Reader
# --------------------------------------------------------------------------


def _parse_description(text: str) -> tuple[tuple[int, int, int], float]:
    background = (255, 255, 255)
    magnification = 40.0
    m = re.search(r"background=#?([0-9a-fA-F]{6})", text)
    if m:
        v = int(m.group(1), 16)
        background = ((v >> 16) & 0xFF, (v >> 8) & 0xFF, v & 0xFF)
    m = re.search(r"magnification=([0-9]+(?:\.[0-9]+)?)", text)
    if m:
        magnification = float(m.group(1))
    return background, magnification


def _format_description(background: tuple[int, int, int], magnification: float) -> str:
    r, g, b = background
    return f"background={r:02X}{g:02X}{b:02X};magnification={magnification:g}"


class _Reader:
    """Single-use parser for one TIFF byte string."""

    def __init__(self, data: bytes):
        self.data = data
        if len(data) < 8:
            raise CorruptDirectory(f"file has only {len(data)} bytes, shorter than a TIFF header")
        order = data[:2]
        if order == b"MM":
            raise CorruptDirectory("big-endian TIFF is not supported")
        if order != b"II":
            raise CorruptDirectory(f"bad byte-order mark {order!r}")
        magic = struct.unpack_from("<H", data, 2)[0]
        if magic == 43:
            raise CorruptDirectory("BigTIFF is not supported")
        if magic != 42:
            raise CorruptDirectory(f"bad TIFF magic number {magic}")

    def read_u16(self, off: int) -> int:
        self._need(off, 2)
        return struct.unpack_from("<H", self.data, off)[0]

    def read_u32(self, off: int) -> int:
        self._need(off, 4)
        return struct.unpack_from("<I", self.data, off)[0]

    def _need(self, off: int, n: int) -> None:
        if off < 0 or off + n > len(self.data):
            raise CorruptDirectory(f"read of {n} bytes at offset {off} runs past end of file")

    def entry_values(self, ttype: int, count: int, value_field: bytes) -> tuple:
        size = _TYPE_SIZES[ttype] * count
        if size <= 4:
            raw = value_field[:size]
        else:
            off = struct.unpack_from("<I", value_field)[0]
            self._need(off, size)
            raw = self.data[off : off + size]
        if ttype == _TYPE_SHORT:
            return struct.unpack(f"<{count}H", raw)
        if ttype == _TYPE_LONG:
            return struct.unpack(f"<{count}I", raw)
        if ttype in (_TYPE_BYTE, _TYPE_UNDEFINED):
            return tuple(raw)
        if ttype == _TYPE_ASCII:
            return (raw.split(b"\x00", 1)[0].decode("latin-1"),)
        if ttype == _TYPE_RATIONAL:
            parts = struct.unpack(f"<{2 * count}I", raw)
            return tuple(
                parts[2 * i] / parts[2 * i + 1] if parts[2 * i + 1] else 0.0
                for i in range(count)
            )
        raise AssertionError(ttype)

    def read_ifd(self, off: int) -> tuple[dict[int, tuple], int]:
        if off % 2:
            raise CorruptDirectory(f"directory offset {off} is odd")
        count = self.read_u16(off)
        self._need(off + 2, count * 12 + 4)
        entries: dict[int, tuple] = {}
        for i in range(count):
            base = off + 2 + 12 * i
            tag, ttype, n = struct.unpack_from("<HHI", self.data, base)
            value_field = self.data[base + 8 : base + 12]
            if ttype not in _TYPE_SIZES:
                continue  # unknown field type: skip, per TIFF reader guidance
            entries[tag] = self.entry_values(ttype, n, value_field)
        next_off = self.read_u32(off + 2 + count * 12)
        return entries, next_off


def _require_single(entries: dict[int, tuple], tag: int, what: str) -> int:
    if tag not in entries:
        raise CorruptDirectory(f"directory is missing the {what} tag ({tag})")
    return int(entries[tag][0])


def open_pyramid(path: str | Path) -> TiledPyramid:
    """Parse a tiled pyramidal TIFF into a :class:`TiledPyramid`.

    Raises:
        NotTiled: the file stores pixel data in strips.
        UnsupportedCodec: unknown compression scheme or pixel layout.
        CorruptDirectory: structural damage (bad offsets, truncation,
            directory cycles, mismatched tile tables, ...).
        IoFailure: the file cannot be read at all.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    reader = _Reader(data)
    ifds: list[dict[int, tuple]] = []
    off = reader.read_u32(4)
    seen = set()
    while off != 0:
        if off in seen:
            raise CorruptDirectory("directory chain forms a cycle")
        seen.add(off)
        entries, off = reader.read_ifd(off)
        ifds.append(entries)
    if not ifds:
        raise CorruptDirectory("file contains no directories")

    description = ""
    if _TAG_DESCRIPTION in ifds[0]:
        description = str(ifds[0][_TAG_DESCRIPTION][0])
    background, base_magnification = _parse_description(description)

    family: CodecFamily | None = None
    parsed: list[tuple[int, int, int, int, list[bytes | None]]] = []
    for entries in ifds:
        width = _require_single(entries, _TAG_WIDTH, "image width")
        height = _require_single(entries, _TAG_LENGTH, "image length")
        has_tiles = _TAG_TILE_OFFSETS in entries or _TAG_TILE_WIDTH in entries
        if not has_tiles:
            if _TAG_STRIP_OFFSETS in entries or _TAG_ROWS_PER_STRIP in entries:
                raise NotTiled("file stores pixel data in strips, not tiles")
            raise CorruptDirectory("directory has neither tile nor strip layout tags")

        code = int(entries.get(_TAG_COMPRESSION, (1,))[0])
        if code not in _COMPRESSION_TO_FAMILY:
            raise UnsupportedCodec(f"compression scheme {code} is not supported")
        this_family = _COMPRESSION_TO_FAMILY[code]
        if family is None:
            family = this_family
        elif family != this_family:
            raise UnsupportedCodec("levels use different compression schemes")

        photometric = int(entries.get(_TAG_PHOTOMETRIC, (2,))[0])
        if photometric not in (2, 6):
            raise UnsupportedCodec(f"photometric interpretation {photometric} is not RGB/YCbCr")
        spp = int(entries.get(_TAG_SAMPLES_PER_PIXEL, (3,))[0])
        bits = tuple(entries.get(_TAG_BITS_PER_SAMPLE, (8, 8, 8)))
        if spp != 3 or any(b != 8 for b in bits):
            raise UnsupportedCodec(
                f"only 8-bit RGB is supported (got {spp} samples, bits {bits})"
            )
        if int(entries.get(_TAG_PLANAR_CONFIG, (1,))[0]) != 1:
            raise UnsupportedCodec("planar-separated sample layout is not supported")

        tile_w = _require_single(entries, _TAG_TILE_WIDTH, "tile width")
        tile_h = _require_single(entries, _TAG_TILE_LENGTH, "tile length")
        if tile_w <= 0 or tile_h <= 0 or tile_w % 16 or tile_h % 16:
            raise CorruptDirectory(f"tile size {tile_w}x{tile_h} is not a positive multiple of 16")
        across = -(-width // tile_w)
        down = -(-height // tile_h)
        offsets = entries.get(_TAG_TILE_OFFSETS, ())
        counts = entries.get(_TAG_TILE_BYTE_COUNTS, ())
        if len(offsets) != across * down or len(counts) != across * down:
            raise CorruptDirectory(
                f"tile tables have {len(offsets)}/{len(counts)} entries, "
                f"expected {across * down}"
            )
        payloads: list[bytes | None] = []
        for n, (toff, tcnt) in enumerate(zip(offsets, counts)):
            if tcnt == 0:
                payloads.append(None)
                continue
            if toff == 0:
                raise CorruptDirectory(f"tile {n} has a zero offset but {tcnt} bytes")
            if toff + tcnt > len(data):
                raise CorruptDirectory(f"tile {n} data (offset {toff}, {tcnt} bytes) runs past end of file")
            payloads.append(data[toff : toff + tcnt])
        parsed.append((width, height, tile_w, tile_h, payloads))

    parsed.sort(key=lambda p: p[0], reverse=True)
    width0 = parsed[0][0]
    levels = []
    tiles: dict[TileRef, bytes | None] = {}
    prev_downsample = 0.0
    for index, (width, height, tile_w, tile_h, payloads) in enumerate(parsed):
        downsample = width0 / width
        if downsample <= prev_downsample:
            raise CorruptDirectory(f"two levels share the width {width}")
        prev_downsample = downsample
        lvl = PyramidLevel(
            index=index,
            width_px=width,
            height_px=height,
            tile_w=tile_w,
            tile_h=tile_h,
            downsample=downsample,
            magnification=base_magnification / downsample,
        )
        levels.append(lvl)
        for n, payload in enumerate(payloads):
            tiles[TileRef(index, n % lvl.tiles_across, n // lvl.tiles_across)] = payload

    pyramid = TiledPyramid(
        base_magnification=base_magnification,
        background_color=background,
        tile_codec=CodecSpec(family),
        levels=tuple(levels),
        tiles=tiles,
    )
    pyramid.validate()
    return pyramid


# --------------------------------------------------------------------------
# Writer
# --------------------------------------------------------------------------


def _pack_values(ttype: int, values) -> bytes:
    if ttype == _TYPE_SHORT:
        return struct.pack(f"<{len(values)}H", *values)
    if ttype == _TYPE_LONG:
        return struct.pack(f"<{len(values)}I", *values)
    if ttype == _TYPE_ASCII:
        return values  # already NUL-terminated bytes
    raise AssertionError(ttype)


def _transcode_tiles(pyramid: TiledPyramid, codec: CodecSpec) -> dict[TileRef, bytes | None]:
    tiles: dict[TileRef, bytes | None] = {}
    for ref, payload in pyramid.tiles.items():
        if payload is None:
            tiles[ref] = None
        else:
            tiles[ref] = codecs.encode_payload(pyramid.read_tile(ref), codec)
    return tiles


def write_pyramid(pyramid: TiledPyramid, path: str | Path, codec: CodecSpec | None = None) -> int:
    """Serialize a pyramid to a tiled TIFF file and return its byte size.

    With ``codec=None`` (or a codec matching the pyramid's own) the stored
    payloads are written through byte-for-byte; otherwise every present
    tile is transcoded (decoded and re-encoded) into *codec*.  Empty tiles
    stay empty either way: offset 0, byte count 0, no data written.
    """
    pyramid.validate()
    if codec is not None and codec.family == CodecFamily.MOCK_LEARNED:
        raise UnsupportedCodec("mock-learned output is two-stream and cannot be stored in TIFF tiles")
    if pyramid.tile_codec.family == CodecFamily.MOCK_LEARNED:
        raise UnsupportedCodec("pyramid payloads claim a two-stream codec, which TIFF tiles cannot hold")
    if codec is None or codec == pyramid.tile_codec:
        out_codec = pyramid.tile_codec
        tiles = pyramid.tiles
    else:
        out_codec = codec
        tiles = _transcode_tiles(pyramid, codec)

    buf = bytearray(b"II" + struct.pack("<HI", 42, 0))

    def pad_even() -> None:
        if len(buf) % 2:
            buf.append(0)

    # Tile data region, level by level in row-major tile order.
    locations: list[list[tuple[int, int]]] = []
    for lvl in pyramid.levels:
        here: list[tuple[int, int]] = []
        for row in range(lvl.tiles_down):
            for col in range(lvl.tiles_across):
                payload = tiles[TileRef(lvl.index, col, row)]
                if payload is None:
                    here.append((0, 0))
                else:
                    pad_even()
                    here.append((len(buf), len(payload)))
                    buf.extend(payload)
        locations.append(here)

    compression_code = _FAMILY_TO_COMPRESSION[out_codec.family]
    description = _format_description(
        pyramid.background_color, pyramid.base_magnification
    ).encode("ascii") + b"\x00"
    software = _SOFTWARE.encode("ascii") + b"\x00"

    ifd_offsets: list[int] = []
    for lvl in pyramid.levels:
        entries: list[tuple[int, int, int, bytes]] = [
            (_TAG_SUBFILE_TYPE, _TYPE_LONG, 1, _pack_values(_TYPE_LONG, [0 if lvl.index == 0 else 1])),
            (_TAG_WIDTH, _TYPE_LONG, 1, _pack_values(_TYPE_LONG, [lvl.width_px])),
            (_TAG_LENGTH, _TYPE_LONG, 1, _pack_values(_TYPE_LONG, [lvl.height_px])),
            (_TAG_BITS_PER_SAMPLE, _TYPE_SHORT, 3, _pack_values(_TYPE_SHORT, [8, 8, 8])),
            (_TAG_COMPRESSION, _TYPE_SHORT, 1, _pack_values(_TYPE_SHORT, [compression_code])),
            (_TAG_PHOTOMETRIC, _TYPE_SHORT, 1, _pack_values(_TYPE_SHORT, [2])),
        ]
        if lvl.index == 0:
            entries.append((_TAG_DESCRIPTION, _TYPE_ASCII, len(description), description))
        entries.append((_TAG_SAMPLES_PER_PIXEL, _TYPE_SHORT, 1, _pack_values(_TYPE_SHORT, [3])))
        entries.append((_TAG_PLANAR_CONFIG, _TYPE_SHORT, 1, _pack_values(_TYPE_SHORT, [1])))
        if lvl.index == 0:
            entries.append((_TAG_SOFTWARE, _TYPE_ASCII, len(software), software))
        here = locations[lvl.index]
        entries.extend(
            [
                (_TAG_TILE_WIDTH, _TYPE_LONG, 1, _pack_values(_TYPE_LONG, [lvl.tile_w])),
                (_TAG_TILE_LENGTH, _TYPE_LONG, 1, _pack_values(_TYPE_LONG, [lvl.tile_h])),
                (_TAG_TILE_OFFSETS, _TYPE_LONG, len(here), _pack_values(_TYPE_LONG, [o for o, _ in here])),
                (
                    _TAG_TILE_BYTE_COUNTS,
                    _TYPE_LONG,
                    len(here),
                    _pack_values(_TYPE_LONG, [c for _, c in here]),
                ),
            ]
        )
        entries.sort(key=lambda e: e[0])

        pad_even()
        ifd_offset = len(buf)
        ifd_offsets.append(ifd_offset)
        table_size = 2 + 12 * len(entries) + 4
        outline_cursor = ifd_offset + table_size
        table = bytearray(struct.pack("<H", len(entries)))
        outline = bytearray()
        for tag, ttype, count, raw in entries:
            if len(raw) <= 4:
                value_field = raw.ljust(4, b"\x00")
            else:
                value_field = struct.pack("<I", outline_cursor)
                outline.extend(raw)
                if len(raw) % 2:
                    outline.append(0)
                outline_cursor += len(raw) + (len(raw) % 2)
            table.extend(struct.pack("<HHI", tag, ttype, count) + value_field)
        next_placeholder = len(buf) + len(table)
        table.extend(struct.pack("<I", 0))  # next-IFD pointer, patched below
        buf.extend(table)
        buf.extend(outline)
        # Remember where this IFD's next pointer lives.
        ifd_offsets[-1] = (ifd_offset, next_placeholder)

    # Chain the directories and patch the header.
    for i, (ifd_offset, next_ptr) in enumerate(ifd_offsets):
        nxt = ifd_offsets[i + 1][0] if i + 1 < len(ifd_offsets) else 0
        struct.pack_into("<I", buf, next_ptr, nxt)
    struct.pack_into("<I", buf, 4, ifd_offsets[0][0])

    out = Path(path)
    try:
        out.write_bytes(bytes(buf))
    except OSError as exc:
        raise IoFailure(f"could not write {out}: {exc}") from exc
    return len(buf)
