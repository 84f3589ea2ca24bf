"""Tissue-vs-glass segmentation by color distance, plus mask utilities.

A pixel is tissue when its Euclidean RGB distance to the reference color
(white by default) strictly exceeds the threshold:

    d = sqrt((R - r)^2 + (G - g)^2 + (B - b)^2) > threshold

The raw mask is then smoothed by morphological closing (dilation followed
by erosion) with a Euclidean disk: pixel offset (dx, dy) belongs to the
disk of radius r iff dx^2 + dy^2 <= r^2.  Pixels outside the image count
as glass; closing is evaluated on a glass-extended plane and cropped back,
so an all-true mask stays all-true (closing is extensive) and the result
equals the unbounded-plane closing.

Masks are immutable values: boolean bit arrays tagged with the
magnification they were computed at.  The interchange format is 8-bit
grayscale PNG (0 = glass, 255 = tissue) with the magnification stored in a
``magnification=X`` text key.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import distance_transform_edt

from . import pngio
from .errors import DimensionMismatch, InvalidDimensions, IoFailure
from .tiffio import TiledPyramid

__all__ = [
    "BinaryMask",
    "SegmentationConfig",
    "color_distance",
    "dice",
    "load_mask",
    "morphological_close",
    "rescale_mask",
    "save_mask",
    "segment_slide",
    "threshold_segment",
]

_MAX_DISTANCE = (3 * 255.0**2) ** 0.5  # distance between opposite RGB corners


@dataclass(frozen=True)
class SegmentationConfig:
    """Parameters of the color-distance segmentation."""

    threshold: float = 85.0
    closing_radius: int = 9
    reference_color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if not 0 <= self.threshold < _MAX_DISTANCE:
            raise ValueError(
                f"threshold must be in [0, {_MAX_DISTANCE:.2f}), got {self.threshold}"
            )
        if self.closing_radius < 0:
            raise ValueError(f"closing radius must be >= 0, got {self.closing_radius}")
        if len(self.reference_color) != 3 or not all(
            0 <= c <= 255 for c in self.reference_color
        ):
            raise ValueError(f"bad reference color {self.reference_color!r}")


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """A boolean tissue mask (True = tissue) at a known magnification."""

    bits: np.ndarray
    magnification: float = 1.0

    def __post_init__(self) -> None:
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise InvalidDimensions(
                f"mask bits must be a 2-D boolean array, got {self.bits.shape} {self.bits.dtype}"
            )
        if self.bits.size == 0:
            raise InvalidDimensions("mask must have a non-empty extent")
        if self.magnification <= 0:
            raise ValueError(f"magnification must be positive, got {self.magnification}")
        self.bits.setflags(write=False)

    @property
    def width_px(self) -> int:
        return self.bits.shape[1]

    @property
    def height_px(self) -> int:
        return self.bits.shape[0]

    @property
    def tissue_pixels(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def tissue_fraction(self) -> float:
        return self.tissue_pixels / self.bits.size


def color_distance(pixel, reference: tuple[int, int, int] = (255, 255, 255)):
    """Euclidean RGB distance to *reference*.

    Accepts a single ``(r, g, b)`` triple (returns a float) or an
    ``(..., 3)`` array (returns an ``(...)`` float array).
    """
    arr = np.asarray(pixel, dtype=np.float64)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected RGB values, got shape {arr.shape}")
    diff = arr - np.asarray(reference, dtype=np.float64)
    dist = np.sqrt((diff * diff).sum(axis=-1))
    return float(dist) if dist.ndim == 0 else dist


def threshold_segment(
    image: np.ndarray, config: SegmentationConfig = SegmentationConfig(), magnification: float = 1.0
) -> BinaryMask:
    """Per-pixel thresholding of the color distance (no morphology).

    A pixel is tissue iff its distance to the reference color is strictly
    greater than the threshold; a pixel exactly at the threshold is glass.
    """
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(
            f"expected (h, w, 3) uint8 image, got shape {image.shape} dtype {image.dtype}"
        )
    diff = image.astype(np.int32)
    diff -= np.asarray(config.reference_color, dtype=np.int32)
    sq = (diff * diff).sum(axis=2)
    # Compare squared values: exact for the integer distances involved.
    bits = sq > config.threshold * config.threshold
    return BinaryMask(bits, magnification)


def _dilate(bits: np.ndarray, radius: int) -> np.ndarray:
    if not bits.any():
        return bits.copy()
    return distance_transform_edt(~bits) <= radius


def _erode(bits: np.ndarray, radius: int) -> np.ndarray:
    if bits.all():
        return bits.copy()
    return distance_transform_edt(bits) > radius


def morphological_close(mask: BinaryMask, radius: int) -> BinaryMask:
    """Dilate then erode with a Euclidean disk of the given radius.

    The operation runs on a glass-padded embedding and is cropped back, so
    it matches closing on an unbounded plane: extensive (output contains
    the input) and idempotent.  Exact Euclidean disks come from comparing
    distance transforms against the radius, which is precise because
    squared pixel distances are integers.
    """
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return mask
    pad = 2 * radius
    padded = np.pad(mask.bits, pad, mode="constant", constant_values=False)
    closed = _erode(_dilate(padded, radius), radius)
    return BinaryMask(closed[pad:-pad, pad:-pad].copy(), mask.magnification)


def segment_slide(
    pyramid: TiledPyramid, config: SegmentationConfig = SegmentationConfig(), level: int | None = None
) -> BinaryMask:
    """Segment a slide: threshold plus closing.

    Runs on the lowest-resolution level by default (``level=None``); the
    returned mask is tagged with that level's magnification.
    """
    if level is None:
        level = len(pyramid.levels) - 1
    lvl = pyramid.level(level)
    image = pyramid.read_region(level, 0, 0, lvl.width_px, lvl.height_px)
    raw = threshold_segment(image, config, magnification=lvl.magnification)
    return morphological_close(raw, config.closing_radius)


def rescale_mask(mask: BinaryMask, target_w: int, target_h: int) -> BinaryMask:
    """Nearest-neighbor rescale: a target pixel takes its nearest source bit.

    The nearest source index for target index i is
    ``min(floor((i + 0.5) * src / dst), src - 1)`` (pixel-center mapping).
    The magnification tag scales with the width ratio.
    """
    if target_w < 1 or target_h < 1:
        raise InvalidDimensions(f"target dimensions must be >= 1, got {target_w}x{target_h}")
    src_h, src_w = mask.bits.shape
    if (target_w, target_h) == (src_w, src_h):
        return mask
    rows = np.minimum(
        ((np.arange(target_h) + 0.5) * src_h / target_h).astype(np.int64), src_h - 1
    )
    cols = np.minimum(
        ((np.arange(target_w) + 0.5) * src_w / target_w).astype(np.int64), src_w - 1
    )
    bits = mask.bits[np.ix_(rows, cols)]
    return BinaryMask(bits, mask.magnification * target_w / src_w)


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """Dice coefficient 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatch(
            f"masks have different dimensions: {a.width_px}x{a.height_px} vs {b.width_px}x{b.height_px}"
        )
    total = a.tissue_pixels + b.tissue_pixels
    if total == 0:
        return 1.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return 2.0 * inter / total


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a mask as an 8-bit grayscale PNG (0 = glass, 255 = tissue)."""
    gray = np.where(mask.bits, np.uint8(255), np.uint8(0))
    data = pngio.encode_gray(gray, text={"magnification": f"{mask.magnification:g}"})
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise IoFailure(f"could not write mask {path}: {exc}") from exc


def load_mask(path: str | Path) -> BinaryMask:
    """Read a mask PNG; any pixel value above 127 counts as tissue.

    Files without a magnification key default to 1.0.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"could not read mask {path}: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as img:
            text = dict(getattr(img, "text", {}) or {})
            gray = np.asarray(img.convert("L"))
    except Exception as exc:
        raise DimensionMismatch(f"mask file {path} is not a readable image: {exc}") from exc
    if gray.ndim != 2 or gray.size == 0:
        raise DimensionMismatch(f"mask file {path} has no pixel grid")
    magnification = 1.0
    if "magnification" in text:
        try:
            magnification = float(text["magnification"])
        except ValueError as exc:
            raise DimensionMismatch(
                f"mask file {path} has a bad magnification entry {text['magnification']!r}"
            ) from exc
    return BinaryMask(gray > 127, magnification)
