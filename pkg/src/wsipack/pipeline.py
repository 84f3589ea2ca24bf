"""Slide recompression: segment, classify tiles, apply a glass policy.

Three policies cover the storage-reduction strategies:

* ``keep``: glass pixels pass through untouched.
* ``single-color``: every glass-mask pixel is replaced by one fill color,
  making glass regions trivially compressible.
* ``empty-tiles``: tiles containing only glass become zero-byte (empty)
  tiles; mixed tiles get their glass pixels filled like ``single-color``.

Recompression always decodes source tiles once and re-encodes once (the
inherent double compression is accepted); the only tiles never decoded are
all-glass tiles dropped by ``empty-tiles``.  Stages are timed on a
monotonic clock at stage boundaries, with per-slide totals reported under
the canonical category names (``Read tiles (I/O)``, ``Decompress tiles``,
``Segmentation``, ``Compress``, ``Write (I/O)``, ``Other``, ``Total``).
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import codecs, segment as segmod, tiffio
from .codecs import CodecSpec
from .errors import MaskRequired
from .segment import BinaryMask, SegmentationConfig
from .tiffio import PyramidLevel, TiledPyramid, TileRef

__all__ = [
    "GlassPolicy",
    "PolicyKind",
    "RecompressResult",
    "RuntimeBreakdown",
    "SizeReductionReport",
    "TileClass",
    "TileClassKind",
    "apply_policy",
    "classify_tile",
    "policy_pixels",
    "recompress_slide",
    "size_reduction",
]

_MASK_MAGNIFICATION = 2.5  # operating point for glass detection


class PolicyKind(str, Enum):
    KEEP = "keep"
    SINGLE_COLOR = "single-color"
    EMPTY_TILES = "empty-tiles"


@dataclass(frozen=True)
class GlassPolicy:
    """What to do with glass pixels and all-glass tiles.

    ``fill`` is the replacement color: the single color for
    ``single-color``, and the fill for mixed tiles under ``empty-tiles``.
    It is ignored by ``keep``.
    """

    kind: PolicyKind
    fill: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if len(self.fill) != 3 or not all(0 <= c <= 255 for c in self.fill):
            raise ValueError(f"bad fill color {self.fill!r}")

    @classmethod
    def keep(cls) -> "GlassPolicy":
        return cls(PolicyKind.KEEP)

    @classmethod
    def single_color(cls, fill: tuple[int, int, int] = (255, 255, 255)) -> "GlassPolicy":
        return cls(PolicyKind.SINGLE_COLOR, fill)

    @classmethod
    def empty_tiles(cls, mixed_fill: tuple[int, int, int] = (255, 255, 255)) -> "GlassPolicy":
        return cls(PolicyKind.EMPTY_TILES, mixed_fill)

    @property
    def label(self) -> str:
        if self.kind == PolicyKind.KEEP:
            return self.kind.value
        r, g, b = self.fill
        return f"{self.kind.value}:{r:02X}{g:02X}{b:02X}"

    @classmethod
    def parse(cls, text: str) -> "GlassPolicy":
        """Parse ``keep``, ``single-color[:RRGGBB]``, or ``empty-tiles[:RRGGBB]``."""
        name, _, hexpart = text.partition(":")
        try:
            kind = PolicyKind(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in PolicyKind)
            raise ValueError(f"unknown policy {name!r}; expected one of: {valid}") from None
        if not hexpart:
            return cls(kind)
        if kind == PolicyKind.KEEP:
            raise ValueError("the keep policy takes no fill color")
        if len(hexpart) != 6:
            raise ValueError(f"fill color must be 6 hex digits, got {hexpart!r}")
        v = int(hexpart, 16)
        return cls(kind, ((v >> 16) & 0xFF, (v >> 8) & 0xFF, v & 0xFF))


class TileClassKind(str, Enum):
    ALL_GLASS = "all_glass"
    MIXED = "mixed"
    ALL_TISSUE = "all_tissue"


@dataclass(frozen=True)
class TileClass:
    """A tile's tissue fraction and the class it implies.

    All-glass iff the fraction is exactly 0, all-tissue iff exactly 1.
    """

    kind: TileClassKind
    tissue_frac: float

    @classmethod
    def from_fraction(cls, tissue_frac: float) -> "TileClass":
        if not 0.0 <= tissue_frac <= 1.0:
            raise ValueError(f"tissue fraction must be in [0, 1], got {tissue_frac}")
        if tissue_frac == 0.0:
            kind = TileClassKind.ALL_GLASS
        elif tissue_frac == 1.0:
            kind = TileClassKind.ALL_TISSUE
        else:
            kind = TileClassKind.MIXED
        return cls(kind, tissue_frac)


def _tile_mask_window(mask: BinaryMask, level: PyramidLevel, tile: TileRef) -> np.ndarray:
    """The mask bits under one tile, cropped to the image extent."""
    y0 = tile.row * level.tile_h
    x0 = tile.col * level.tile_w
    y1 = min(y0 + level.tile_h, level.height_px)
    x1 = min(x0 + level.tile_w, level.width_px)
    return mask.bits[y0:y1, x0:x1]


def classify_tile(mask: BinaryMask, level: PyramidLevel, tile: TileRef) -> TileClass:
    """Classify a tile by the tissue fraction of its mask region.

    The mask must already be at the tile's level dimensions; the fraction
    is computed over the in-extent part of the tile.
    """
    if (mask.height_px, mask.width_px) != (level.height_px, level.width_px):
        raise ValueError(
            f"mask is {mask.width_px}x{mask.height_px} but level {level.index} "
            f"is {level.width_px}x{level.height_px}; rescale the mask first"
        )
    window = _tile_mask_window(mask, level, tile)
    return TileClass.from_fraction(float(np.count_nonzero(window)) / window.size)


def policy_pixels(
    pixels: np.ndarray,
    tile_class: TileClass,
    mask_region: np.ndarray | None,
    policy: GlassPolicy,
) -> np.ndarray | None:
    """Resolve a policy on decoded pixels, before re-encoding.

    Returns ``None`` when the tile becomes empty, the input array when
    nothing changes, or a new array with glass pixels filled.  Only
    glass-mask pixels are ever modified; ``mask_region`` may be ``None``
    for the paths that never touch pixels (keep, all-tissue).
    """
    if policy.kind == PolicyKind.KEEP or tile_class.kind == TileClassKind.ALL_TISSUE:
        return pixels
    if policy.kind == PolicyKind.EMPTY_TILES and tile_class.kind == TileClassKind.ALL_GLASS:
        return None
    if mask_region is None or mask_region.shape != pixels.shape[:2]:
        raise ValueError(
            f"painting needs a mask region matching the tile pixels {pixels.shape[:2]}"
        )
    out = pixels.copy()
    out[~mask_region] = policy.fill
    return out


def apply_policy(
    pixels: np.ndarray,
    tile_class: TileClass,
    mask_region: np.ndarray,
    policy: GlassPolicy,
    codec: CodecSpec,
) -> bytes | None:
    """Apply a policy and encode: the new tile payload, or None for empty."""
    resolved = policy_pixels(pixels, tile_class, mask_region, policy)
    if resolved is None:
        return None
    return codecs.encode_payload(resolved, codec)


def size_reduction(new_bytes: int, baseline_bytes: int) -> float:
    """Size reduction percentage: ``(1 - new/baseline) * 100``."""
    if baseline_bytes <= 0:
        raise ValueError(f"baseline size must be positive, got {baseline_bytes}")
    return (1.0 - new_bytes / baseline_bytes) * 100.0


@dataclass(frozen=True)
class RuntimeBreakdown:
    """Per-stage wall-clock seconds for one recompression run."""

    read_s: float
    decompress_s: float
    segment_s: float
    compress_s: float
    write_s: float
    other_s: float
    total_s: float

    @classmethod
    def from_stages(
        cls,
        total_s: float,
        read_s: float = 0.0,
        decompress_s: float = 0.0,
        segment_s: float = 0.0,
        compress_s: float = 0.0,
        write_s: float = 0.0,
    ) -> "RuntimeBreakdown":
        named = read_s + decompress_s + segment_s + compress_s + write_s
        return cls(
            read_s=read_s,
            decompress_s=decompress_s,
            segment_s=segment_s,
            compress_s=compress_s,
            write_s=write_s,
            other_s=max(0.0, total_s - named),
            total_s=max(total_s, named),
        )

    def as_report(self) -> dict[str, float]:
        """Stage times under the canonical report category names."""
        return {
            "Read tiles (I/O)": self.read_s,
            "Decompress tiles": self.decompress_s,
            "Segmentation": self.segment_s,
            "Compress": self.compress_s,
            "Write (I/O)": self.write_s,
            "Other": self.other_s,
            "Total": self.total_s,
        }


@dataclass(frozen=True)
class SizeReductionReport:
    """Sizes and tile-class counts for one recompression run."""

    out_path: str
    out_bytes: int
    baseline_bytes: int | None
    reduction_pct: float | None
    policy_label: str
    codec_label: str
    tile_classes: dict[str, int]

    def as_report(self) -> dict:
        return {
            "out_path": self.out_path,
            "out_bytes": self.out_bytes,
            "baseline_bytes": self.baseline_bytes,
            "reduction_pct": self.reduction_pct,
            "policy": self.policy_label,
            "codec": self.codec_label,
            "tile_classes": dict(self.tile_classes),
        }


@dataclass(frozen=True)
class RecompressResult:
    size_bytes: int
    runtime: RuntimeBreakdown
    report: SizeReductionReport


def _resolve_mask(
    pyramid: TiledPyramid,
    mask_source: BinaryMask | SegmentationConfig | str | Path | None,
    policy: GlassPolicy,
) -> tuple[BinaryMask | None, float]:
    """Obtain the glass-detection mask; returns (mask, seconds spent)."""
    if mask_source is None:
        if policy.kind != PolicyKind.KEEP:
            raise MaskRequired(f"policy {policy.label} needs a tissue mask source")
        return None, 0.0
    start = time.perf_counter()
    if isinstance(mask_source, BinaryMask):
        mask = mask_source
    elif isinstance(mask_source, SegmentationConfig):
        try:
            level = tiffio.level_for_magnification(pyramid, _MASK_MAGNIFICATION)
        except Exception:
            level = len(pyramid.levels) - 1
        mask = segmod.segment_slide(pyramid, mask_source, level=level)
    else:
        mask = segmod.load_mask(mask_source)
    return mask, time.perf_counter() - start


def recompress_slide(
    source: TiledPyramid | str | Path,
    out_path: str | Path,
    policy: GlassPolicy,
    codec: CodecSpec | None = None,
    mask_source: BinaryMask | SegmentationConfig | str | Path | None = None,
    baseline_bytes: int | None = None,
    threads: int = 1,
) -> RecompressResult:
    """Rewrite a slide under a glass policy with stage-by-stage timing.

    Args:
        source: a pyramid value or a path to a tiled TIFF.
        out_path: where the new pyramid is written.
        policy: glass handling; non-``keep`` policies require a mask source.
        codec: target tile codec; ``None`` re-encodes with the source codec.
        mask_source: a precomputed mask, a segmentation config (the mask is
            then computed at the level nearest x2.5, falling back to the
            lowest-resolution level), or a mask PNG path.
        baseline_bytes: denominator for the size-reduction percentage; when
            ``None`` and ``source`` is a path, the source file size is used.
        threads: worker threads for the decode and encode phases.

    Returns:
        The written size, the runtime breakdown, and the size report.
    """
    t0 = time.perf_counter()

    read_s = 0.0
    if isinstance(source, (str, Path)):
        if baseline_bytes is None:
            baseline_bytes = Path(source).stat().st_size
        start = time.perf_counter()
        pyramid = tiffio.open_pyramid(source)
        read_s = time.perf_counter() - start
    else:
        pyramid = source
        pyramid.validate()

    out_codec = codec if codec is not None else pyramid.tile_codec
    mask, segment_s = _resolve_mask(pyramid, mask_source, policy)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    decompress_s = 0.0
    compress_s = 0.0
    class_counts = {kind.value: 0 for kind in TileClassKind}
    class_counts["already_empty"] = 0
    new_tiles: dict[TileRef, bytes | None] = {}

    try:
        for lvl in pyramid.levels:
            lvl_mask: BinaryMask | None = None
            if mask is not None:
                start = time.perf_counter()
                lvl_mask = segmod.rescale_mask(mask, lvl.width_px, lvl.height_px)
                segment_s += time.perf_counter() - start

            # Classify, and decide which tiles need pixel work.
            to_decode: list[TileRef] = []
            classes: dict[TileRef, TileClass] = {}
            windows: dict[TileRef, np.ndarray] = {}
            for ref in pyramid.iter_tiles(lvl.index):
                if pyramid.tiles[ref] is None:
                    class_counts["already_empty"] += 1
                    new_tiles[ref] = None
                    continue
                if lvl_mask is not None:
                    tclass = classify_tile(lvl_mask, lvl, ref)
                    classes[ref] = tclass
                    class_counts[tclass.kind.value] += 1
                    if (
                        policy.kind == PolicyKind.EMPTY_TILES
                        and tclass.kind == TileClassKind.ALL_GLASS
                    ):
                        new_tiles[ref] = None  # dropped: never decoded or encoded
                        continue
                    if tclass.kind != TileClassKind.ALL_TISSUE:
                        win = _tile_mask_window(lvl_mask, lvl, ref)
                        if win.shape != (lvl.tile_h, lvl.tile_w):
                            full = np.zeros((lvl.tile_h, lvl.tile_w), bool)
                            full[: win.shape[0], : win.shape[1]] = win
                            win = full
                        windows[ref] = win
                to_decode.append(ref)

            # Decode phase.
            start = time.perf_counter()
            if pool is not None:
                decoded = dict(zip(to_decode, pool.map(pyramid.read_tile, to_decode)))
            else:
                decoded = {ref: pyramid.read_tile(ref) for ref in to_decode}
            decompress_s += time.perf_counter() - start

            # Policy + encode phase.
            start = time.perf_counter()

            def encode_one(ref: TileRef) -> bytes | None:
                pixels = decoded[ref]
                if ref in classes and policy.kind != PolicyKind.KEEP:
                    resolved = policy_pixels(pixels, classes[ref], windows.get(ref), policy)
                else:
                    resolved = pixels
                if resolved is None:
                    return None
                return codecs.encode_payload(resolved, out_codec)

            if pool is not None:
                encoded = list(pool.map(encode_one, to_decode))
            else:
                encoded = [encode_one(ref) for ref in to_decode]
            for ref, payload in zip(to_decode, encoded):
                new_tiles[ref] = payload
            compress_s += time.perf_counter() - start
    finally:
        if pool is not None:
            pool.shutdown()

    # Glass-filling policies make the fill the slide's background, so any
    # empty tile decodes to the same color the painted glass has.
    background = pyramid.background_color if policy.kind == PolicyKind.KEEP else policy.fill
    out = TiledPyramid(
        base_magnification=pyramid.base_magnification,
        background_color=background,
        tile_codec=out_codec,
        levels=pyramid.levels,
        tiles=new_tiles,
    )
    start = time.perf_counter()
    size_bytes = tiffio.write_pyramid(out, out_path)
    write_s = time.perf_counter() - start

    total_s = time.perf_counter() - t0
    runtime = RuntimeBreakdown.from_stages(
        total_s,
        read_s=read_s,
        decompress_s=decompress_s,
        segment_s=segment_s,
        compress_s=compress_s,
        write_s=write_s,
    )
    report = SizeReductionReport(
        out_path=str(out_path),
        out_bytes=size_bytes,
        baseline_bytes=baseline_bytes,
        reduction_pct=None if baseline_bytes is None else size_reduction(size_bytes, baseline_bytes),
        policy_label=policy.label,
        codec_label=out_codec.label,
        tile_classes=class_counts if mask is not None else {},
    )
    return RecompressResult(size_bytes=size_bytes, runtime=runtime, report=report)
