"""Shared fixtures: small deterministic slides reused across test modules."""

from __future__ import annotations

import numpy as np
import pytest

from wsipack.synth import SynthSpec, generate_slide


@pytest.fixture(scope="session")
def small_slide():
    """A 1024x768, 2-level slide with a one-tile-row glass band."""
    spec = SynthSpec(
        seed=42, width_px=1024, height_px=768, n_levels=2, glass_tile_frac=0.34
    )
    return generate_slide(spec)


@pytest.fixture(scope="session")
def tissue_patches(small_slide):
    """Level-0 patch pixel arrays from the shared slide."""
    from wsipack.patches import PatchSpec, extract_patches

    pyramid, _ = small_slide
    spec = PatchSpec(patch_px=256, min_tissue_frac=0.0)
    return [record.pixels for record in extract_patches(pyramid, 0, spec)]


def random_rgb(rng: np.random.Generator, h: int = 64, w: int = 64) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
