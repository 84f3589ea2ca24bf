"""Patch planning, extraction, patch pyramids, balanced sets, stitching.

Patches are axis-aligned squares laid out row-major on a stride of
``patch_px - floor(patch_px * overlap_frac)`` pixels.  The final row and
column are always included even when they overhang the level, and the
overhang is padded with a fixed color at read time, so every source pixel
belongs to at least one patch.  A tissue mask (rescaled to the level with
nearest-neighbor sampling) can filter extraction to patches whose tissue
fraction strictly exceeds a minimum.

A *patch pyramid* mirrors a slide as loose lossless PNG files, one folder
per level (``level_<k>/x<origin_x>_y<origin_y>.png``), with a JSON
manifest recording files, counts, and byte totals.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import pngio
from .errors import InsufficientPatches, InvalidSpec, IoFailure, MissingPatch
from .pipeline import GlassPolicy, PolicyKind
from .segment import BinaryMask, rescale_mask
from .tiffio import TiledPyramid

__all__ = [
    "PatchRecord",
    "PatchSpec",
    "PatchPyramidManifest",
    "build_balanced_set",
    "build_patch_pyramid",
    "extract_patches",
    "plan_patches",
    "select_level_with_fallback",
    "stitch",
]

# Fewer tissue pixels than this at the requested level falls back to level 0.
LEVEL_FALLBACK_TISSUE_PX = 2 * 512 * 512


@dataclass(frozen=True)
class PatchSpec:
    """Geometry and filtering rules for patch extraction."""

    patch_px: int = 256
    overlap_frac: float = 0.0
    min_tissue_frac: float = 0.5
    magnification: float | None = None
    pad_color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if self.patch_px < 1:
            raise InvalidSpec(f"patch size must be >= 1, got {self.patch_px}")
        if not 0.0 <= self.overlap_frac < 0.5:
            raise InvalidSpec(f"overlap fraction must be in [0, 0.5), got {self.overlap_frac}")
        if not 0.0 <= self.min_tissue_frac <= 1.0:
            raise InvalidSpec(f"min tissue fraction must be in [0, 1], got {self.min_tissue_frac}")
        if self.magnification is not None and self.magnification <= 0:
            raise InvalidSpec(f"magnification must be positive, got {self.magnification}")
        if len(self.pad_color) != 3 or not all(0 <= c <= 255 for c in self.pad_color):
            raise InvalidSpec(f"bad pad color {self.pad_color!r}")
        if self.stride < 1:
            raise InvalidSpec("stride must be >= 1")

    @property
    def overlap_px(self) -> int:
        return math.floor(self.patch_px * self.overlap_frac)

    @property
    def stride(self) -> int:
        return self.patch_px - math.floor(self.patch_px * self.overlap_frac)


@dataclass(frozen=True, eq=False)
class PatchRecord:
    """One extracted patch: pixels plus where in the pyramid they came from."""

    pixels: np.ndarray
    source_level: int
    origin_x: int
    origin_y: int
    magnification: float
    tissue_frac: float | None = None

    def __post_init__(self) -> None:
        h, w = self.pixels.shape[:2]
        if h != w:
            raise ValueError(f"patches must be square, got {w}x{h}")


def _axis_origins(dim: int, patch: int, stride: int) -> list[int]:
    origins = [0]
    while origins[-1] + patch < dim:
        origins.append(origins[-1] + stride)
    return origins


def plan_patches(level_w: int, level_h: int, spec: PatchSpec) -> list[tuple[int, int]]:
    """Row-major patch origins covering the full ``level_w x level_h`` extent.

    Origins sit at multiples of the stride; the final row/column is
    included even when the patch overhangs the extent.
    """
    if level_w < 1 or level_h < 1:
        raise ValueError(f"level dimensions must be >= 1, got {level_w}x{level_h}")
    xs = _axis_origins(level_w, spec.patch_px, spec.stride)
    ys = _axis_origins(level_h, spec.patch_px, spec.stride)
    return [(x, y) for y in ys for x in xs]


def _read_patch(pyramid: TiledPyramid, level: int, x: int, y: int, spec: PatchSpec) -> np.ndarray:
    """Read one patch, padding any overhang with the spec's pad color."""
    lvl = pyramid.level(level)
    p = spec.patch_px
    in_w = min(p, lvl.width_px - x)
    in_h = min(p, lvl.height_px - y)
    if in_w >= p and in_h >= p:
        return pyramid.read_region(level, x, y, p, p)
    out = np.full((p, p, 3), spec.pad_color, np.uint8)
    if in_w > 0 and in_h > 0:
        out[:in_h, :in_w] = pyramid.read_region(level, x, y, in_w, in_h)
    return out


def _mask_at_level(mask: BinaryMask, pyramid: TiledPyramid, level: int) -> BinaryMask:
    lvl = pyramid.level(level)
    return rescale_mask(mask, lvl.width_px, lvl.height_px)


def _window_tissue_frac(bits: np.ndarray, x: int, y: int, patch: int) -> float:
    """Tissue fraction over a patch window; overhang counts as glass."""
    window = bits[y : y + patch, x : x + patch]
    return float(np.count_nonzero(window)) / (patch * patch)


def extract_patches(
    pyramid: TiledPyramid,
    level: int,
    spec: PatchSpec,
    mask: BinaryMask | None = None,
) -> Iterator[PatchRecord]:
    """Yield planned patches from one level, in plan order.

    With a mask, only patches whose tissue fraction strictly exceeds
    ``spec.min_tissue_frac`` are yielded; without one, every planned patch
    is yielded and ``tissue_frac`` is ``None``.
    """
    lvl = pyramid.level(level)
    bits = _mask_at_level(mask, pyramid, level).bits if mask is not None else None
    for x, y in plan_patches(lvl.width_px, lvl.height_px, spec):
        frac = None
        if bits is not None:
            frac = _window_tissue_frac(bits, x, y, spec.patch_px)
            if not frac > spec.min_tissue_frac:
                continue
        yield PatchRecord(
            pixels=_read_patch(pyramid, level, x, y, spec),
            source_level=level,
            origin_x=x,
            origin_y=y,
            magnification=lvl.magnification,
            tissue_frac=frac,
        )


def select_level_with_fallback(
    pyramid: TiledPyramid, requested_level: int, mask: BinaryMask
) -> int:
    """The requested level, or level 0 when it holds too little tissue.

    The cutoff is 2 * 512 * 512 = 524288 tissue pixels, counted on the
    mask rescaled to the requested level: strictly fewer falls back.
    """
    pyramid.level(requested_level)
    if requested_level == 0:
        return 0
    tissue = _mask_at_level(mask, pyramid, requested_level).tissue_pixels
    return requested_level if tissue >= LEVEL_FALLBACK_TISSUE_PX else 0


@dataclass(frozen=True)
class PatchPyramidManifest:
    """Summary of one written patch pyramid."""

    out_dir: str
    policy_label: str
    patch_px: int
    overlap_frac: float
    pad_color: tuple[int, int, int]
    seed: int | None
    levels: dict[int, dict]
    total_files: int
    total_bytes: int

    def as_report(self) -> dict:
        return {
            "out_dir": self.out_dir,
            "policy": self.policy_label,
            "patch_px": self.patch_px,
            "overlap_frac": self.overlap_frac,
            "pad_color": list(self.pad_color),
            "seed": self.seed,
            "levels": {
                str(k): dict(v) for k, v in sorted(self.levels.items())
            },
            "total_files": self.total_files,
            "total_bytes": self.total_bytes,
        }


def build_patch_pyramid(
    pyramid: TiledPyramid,
    spec: PatchSpec,
    mask: BinaryMask | None,
    policy: GlassPolicy,
    out_dir: str | Path,
) -> PatchPyramidManifest:
    """Write every level's planned patches as PNG files plus a manifest.

    Under ``single-color``/``empty-tiles``, glass-mask pixels are filled
    before writing; under ``empty-tiles`` a patch with zero tissue is
    skipped entirely (no file).  Patch files are named
    ``level_<k>/x<origin_x>_y<origin_y>.png``.
    """
    if policy.kind != PolicyKind.KEEP and mask is None:
        raise InvalidSpec(f"policy {policy.label} needs a tissue mask")
    root = Path(out_dir)
    levels_out: dict[int, dict] = {}
    total_files = 0
    total_bytes = 0
    try:
        root.mkdir(parents=True, exist_ok=True)
        for lvl in pyramid.levels:
            bits = _mask_at_level(mask, pyramid, lvl.index).bits if mask is not None else None
            level_dir = root / f"level_{lvl.index}"
            level_dir.mkdir(exist_ok=True)
            files: list[str] = []
            level_bytes = 0
            for x, y in plan_patches(lvl.width_px, lvl.height_px, spec):
                pixels = _read_patch(pyramid, lvl.index, x, y, spec)
                if bits is not None and policy.kind != PolicyKind.KEEP:
                    frac = _window_tissue_frac(bits, x, y, spec.patch_px)
                    if policy.kind == PolicyKind.EMPTY_TILES and frac == 0.0:
                        continue
                    if frac < 1.0:
                        window = np.zeros((spec.patch_px, spec.patch_px), bool)
                        sub = bits[y : y + spec.patch_px, x : x + spec.patch_px]
                        window[: sub.shape[0], : sub.shape[1]] = sub
                        pixels = pixels.copy()
                        pixels[~window] = policy.fill
                name = f"x{x}_y{y}.png"
                data = pngio.encode_rgb(pixels)
                (level_dir / name).write_bytes(data)
                files.append(f"level_{lvl.index}/{name}")
                level_bytes += len(data)
            levels_out[lvl.index] = {
                "count": len(files),
                "bytes": level_bytes,
                "magnification": lvl.magnification,
                "files": files,
            }
            total_files += len(files)
            total_bytes += level_bytes
        manifest = PatchPyramidManifest(
            out_dir=str(root),
            policy_label=policy.label,
            patch_px=spec.patch_px,
            overlap_frac=spec.overlap_frac,
            pad_color=spec.pad_color,
            seed=None,
            levels=levels_out,
            total_files=total_files,
            total_bytes=total_bytes,
        )
        (root / "manifest.json").write_text(json.dumps(manifest.as_report(), indent=2))
    except OSError as exc:
        raise IoFailure(f"could not write patch pyramid under {root}: {exc}") from exc
    return manifest


def _canonical(records: list[PatchRecord]) -> list[PatchRecord]:
    return sorted(records, key=lambda r: (r.source_level, r.origin_y, r.origin_x))


def build_balanced_set(
    sets: dict[float, list[PatchRecord]], n_per_mag: int, seed: int
) -> list[PatchRecord]:
    """Sample ``n_per_mag`` patches per magnification, deterministically.

    Magnifications are visited in sorted order; each list is normalized to
    canonical order (level, origin_y, origin_x) before sampling without
    replacement, and the sample is emitted in canonical order too.
    """
    if n_per_mag < 0:
        raise ValueError(f"n_per_mag must be >= 0, got {n_per_mag}")
    rng = random.Random(seed)
    out: list[PatchRecord] = []
    for magnification in sorted(sets):
        records = _canonical(sets[magnification])
        if len(records) < n_per_mag:
            raise InsufficientPatches(
                f"magnification x{magnification:g} has {len(records)} patches, need {n_per_mag}"
            )
        picked = rng.sample(range(len(records)), n_per_mag)
        out.extend(records[i] for i in sorted(picked))
    return out


def stitch(
    patches: list[PatchRecord], level_w: int, level_h: int, spec: PatchSpec
) -> np.ndarray:
    """Reassemble patches into a level-sized buffer, averaging overlaps.

    Every in-bounds pixel must be covered by at least one patch
    (:class:`~wsipack.errors.MissingPatch` otherwise); overhang beyond the
    level extent is discarded.
    """
    if level_w < 1 or level_h < 1:
        raise ValueError(f"level dimensions must be >= 1, got {level_w}x{level_h}")
    acc = np.zeros((level_h, level_w, 3), np.float64)
    count = np.zeros((level_h, level_w), np.uint32)
    p = spec.patch_px
    for rec in patches:
        if rec.pixels.shape[:2] != (p, p):
            raise ValueError(
                f"patch at ({rec.origin_x}, {rec.origin_y}) is "
                f"{rec.pixels.shape[1]}x{rec.pixels.shape[0]}, spec says {p}"
            )
        x0, y0 = rec.origin_x, rec.origin_y
        x1, y1 = min(x0 + p, level_w), min(y0 + p, level_h)
        if x1 <= x0 or y1 <= y0:
            continue
        acc[y0:y1, x0:x1] += rec.pixels[: y1 - y0, : x1 - x0]
        count[y0:y1, x0:x1] += 1
    if not count.all():
        misses = int((count == 0).sum())
        raise MissingPatch(f"{misses} pixels are not covered by any patch")
    return np.rint(acc / count[:, :, None]).astype(np.uint8)
