"""Deterministic synthetic slides with exact ground-truth tissue masks.

A generated slide is near-white glass (white minus small uniform noise)
with a band of all-glass tile rows at the top and colored elliptical
blobs (a fixed HE-like purple/pink palette) below.  Every tile row below
the glass band receives at least one blob per tile, so the achieved
all-glass tile fraction tracks ``glass_tile_frac`` to within one tile row.
Optional dark 1-pixel grid lines emulate glass-line scan artifacts; they
contaminate the *image* but never the returned mask, which is exact blob
geometry by construction.

Color margins are chosen so the ground truth coincides with color-distance
thresholding at the default threshold: glass noise keeps glass pixels
within distance ~35 of white, while blob pixels stay beyond distance 160.

Downsampled levels come from repeated 2x box-filter averaging
(edge-replicated for odd dimensions), like typical scanner pyramids.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codecs import CodecFamily, CodecSpec, encode_payload
from .errors import InvalidSpec
from .segment import BinaryMask
from .tiffio import PyramidLevel, TiledPyramid, TileRef

__all__ = ["SynthSpec", "generate_slide"]

# Blob fill colors (HE-like); all are far from white: the nearest is at
# Euclidean RGB distance ~178, and per-pixel jitter of ±10 keeps every
# tissue pixel beyond distance 160 while glass noise stays below ~35.
_PALETTE = (
    (120, 56, 144),
    (158, 80, 160),
    (196, 110, 170),
    (150, 70, 120),
    (90, 40, 110),
)
_LINE_COLOR = (40, 40, 40)
_BACKGROUND = (255, 255, 255)
_COLOR_JITTER = 10


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic slide."""

    seed: int = 0
    width_px: int = 2048
    height_px: int = 1536
    n_levels: int = 3
    tile_px: int = 256
    glass_tile_frac: float = 0.25
    blob_count: int = 12
    glass_noise_amp: int = 8
    artifact_lines: int = 0
    blob_scale: float = 1.0
    base_magnification: float = 40.0

    def __post_init__(self) -> None:
        if self.width_px < 1 or self.height_px < 1:
            raise InvalidSpec(f"slide extent must be positive, got {self.width_px}x{self.height_px}")
        if self.tile_px < 16 or self.tile_px % 16:
            raise InvalidSpec(f"tile size must be a positive multiple of 16, got {self.tile_px}")
        if self.n_levels < 1:
            raise InvalidSpec(f"need at least one level, got {self.n_levels}")
        if not 0.0 <= self.glass_tile_frac <= 1.0:
            raise InvalidSpec(f"glass tile fraction must be in [0, 1], got {self.glass_tile_frac}")
        if self.blob_count < 0:
            raise InvalidSpec(f"blob count must be >= 0, got {self.blob_count}")
        if not 0 <= self.glass_noise_amp <= 20:
            raise InvalidSpec(f"glass noise amplitude must be in [0, 20], got {self.glass_noise_amp}")
        if self.artifact_lines < 0:
            raise InvalidSpec(f"artifact line count must be >= 0, got {self.artifact_lines}")
        if self.blob_scale <= 0:
            raise InvalidSpec(f"blob scale must be positive, got {self.blob_scale}")
        if self.base_magnification <= 0:
            raise InvalidSpec(f"base magnification must be positive, got {self.base_magnification}")


def _draw_ellipse(
    mask: np.ndarray,
    image: np.ndarray,
    cx: float,
    cy: float,
    rx: float,
    ry: float,
    color: tuple[int, int, int],
    band_start: int,
    rng: np.random.Generator,
) -> None:
    """Rasterize one axis-aligned ellipse, clipped to the tissue band."""
    h, w = mask.shape
    y0 = max(int(np.floor(cy - ry)), band_start)
    y1 = min(int(np.ceil(cy + ry)) + 1, h)
    x0 = max(int(np.floor(cx - rx)), 0)
    x1 = min(int(np.ceil(cx + rx)) + 1, w)
    if y1 <= y0 or x1 <= x0:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
    if not inside.any():
        return
    jitter = rng.integers(
        -_COLOR_JITTER, _COLOR_JITTER + 1, size=(y1 - y0, x1 - x0, 3), dtype=np.int16
    )
    patch = np.clip(np.asarray(color, np.int16) + jitter, 0, 255).astype(np.uint8)
    region = image[y0:y1, x0:x1]
    region[inside] = patch[inside]
    mask[y0:y1, x0:x1] |= inside


def _downsample2(image: np.ndarray) -> np.ndarray:
    """2x box-filter downsample, edge-replicating odd dimensions."""
    h, w, _ = image.shape
    if h % 2 or w % 2:
        image = np.pad(image, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    acc = image.astype(np.uint16)
    total = acc[0::2, 0::2] + acc[0::2, 1::2] + acc[1::2, 0::2] + acc[1::2, 1::2]
    return ((total + 2) // 4).astype(np.uint8)


def _render_level0(spec: SynthSpec, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    h, w = spec.height_px, spec.width_px
    tile = spec.tile_px
    image = (
        255
        - rng.integers(0, spec.glass_noise_amp + 1, size=(h, w, 3), dtype=np.int16)
    ).astype(np.uint8)
    mask = np.zeros((h, w), bool)

    tiles_down = -(-h // tile)
    tiles_across = -(-w // tile)
    band_rows = round(spec.glass_tile_frac * tiles_down)
    band_start = min(band_rows * tile, h)

    if band_start < h:
        # One guaranteed blob per tile below the glass band keeps the
        # achieved all-glass tile fraction within one tile row of the
        # request.
        for trow in range(band_rows, tiles_down):
            for tcol in range(tiles_across):
                cx = (tcol + 0.5) * tile + rng.uniform(-0.1, 0.1) * tile
                cy = (trow + 0.5) * tile + rng.uniform(-0.1, 0.1) * tile
                rx = rng.uniform(0.30, 0.48) * tile * spec.blob_scale
                ry = rng.uniform(0.30, 0.48) * tile * spec.blob_scale
                color = _PALETTE[int(rng.integers(len(_PALETTE)))]
                _draw_ellipse(mask, image, cx, cy, rx, ry, color, band_start, rng)
        for _ in range(spec.blob_count):
            cx = rng.uniform(0, w)
            cy = rng.uniform(band_start, h)
            rx = rng.uniform(0.2, 0.6) * tile * spec.blob_scale
            ry = rng.uniform(0.2, 0.6) * tile * spec.blob_scale
            color = _PALETTE[int(rng.integers(len(_PALETTE)))]
            _draw_ellipse(mask, image, cx, cy, rx, ry, color, band_start, rng)

    for i in range(spec.artifact_lines):
        if i % 2 == 0:
            row = int(rng.integers(0, h))
            image[row, :] = _LINE_COLOR
        else:
            col = int(rng.integers(0, w))
            image[:, col] = _LINE_COLOR

    return image, mask


def generate_slide(
    spec: SynthSpec, tile_codec: CodecSpec | None = None
) -> tuple[TiledPyramid, BinaryMask]:
    """Generate a synthetic pyramid and its exact level-0 tissue mask.

    The pyramid's tiles are all present (sparsification is the
    recompression pipeline's job) and encoded with ``tile_codec``
    (lossless PNG by default, keeping the ground truth exact).
    """
    if tile_codec is None:
        tile_codec = CodecSpec(CodecFamily.PNG)
    rng = np.random.default_rng(spec.seed)
    level0, mask_bits = _render_level0(spec, rng)

    images = [level0]
    for _ in range(1, spec.n_levels):
        nxt = _downsample2(images[-1])
        if nxt.shape == images[-1].shape:
            raise InvalidSpec(
                f"{spec.n_levels} levels halve a {spec.width_px}x{spec.height_px} slide below 1 px"
            )
        images.append(nxt)

    levels = []
    tiles: dict[TileRef, bytes | None] = {}
    tile = spec.tile_px
    for index, img in enumerate(images):
        h, w = img.shape[:2]
        lvl = PyramidLevel(
            index=index,
            width_px=w,
            height_px=h,
            tile_w=tile,
            tile_h=tile,
            downsample=spec.width_px / w,
            magnification=spec.base_magnification * w / spec.width_px,
        )
        levels.append(lvl)
        for row in range(lvl.tiles_down):
            for col in range(lvl.tiles_across):
                y0, x0 = row * tile, col * tile
                block = img[y0 : y0 + tile, x0 : x0 + tile]
                if block.shape[:2] != (tile, tile):
                    padded = np.full((tile, tile, 3), _BACKGROUND, np.uint8)
                    padded[: block.shape[0], : block.shape[1]] = block
                    block = padded
                tiles[TileRef(index, col, row)] = encode_payload(block, tile_codec)

    pyramid = TiledPyramid(
        base_magnification=spec.base_magnification,
        background_color=_BACKGROUND,
        tile_codec=tile_codec,
        levels=tuple(levels),
        tiles=tiles,
    )
    pyramid.validate()
    return pyramid, BinaryMask(mask_bits, magnification=spec.base_magnification)
