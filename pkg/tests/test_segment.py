"""Tissue segmentation: thresholding, disk morphology, masks, Dice."""

from __future__ import annotations

import numpy as np
import pytest

import oracles
from wsipack import segment
from wsipack.errors import DimensionMismatch, InvalidDimensions
from wsipack.segment import BinaryMask, SegmentationConfig


def _noise(seed: int, h: int = 64, w: int = 64) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


# ---------------------------------------------------------------------------
# Color-distance thresholding
# ---------------------------------------------------------------------------


def test_color_distance_scalar_and_array():
    assert segment.color_distance((255, 255, 255), (255, 255, 255)) == 0.0
    assert segment.color_distance((0, 0, 0), (255, 255, 255)) == pytest.approx(
        441.6729559300637
    )
    img = np.zeros((2, 2, 3), dtype=np.uint8)
    d = segment.color_distance(img, (3, 4, 0))
    assert d.shape == (2, 2)
    assert np.allclose(d, 5.0)


def test_threshold_is_strict():
    # A color at exactly distance 85 must not be tissue: 85^2 = 7225 = 36+7189?
    # Use 84^2+13^2 = 7056+169 = 7225 = 85^2 exactly.
    assert 84 * 84 + 13 * 13 == 85 * 85
    img = np.array([[[255 - 84, 255 - 13, 255]]], dtype=np.uint8)
    mask = segment.threshold_segment(img, SegmentationConfig(closing_radius=0))
    assert not mask.bits[0, 0]
    just_over = np.array([[[255 - 85, 255 - 13, 255]]], dtype=np.uint8)
    mask = segment.threshold_segment(just_over, SegmentationConfig(closing_radius=0))
    assert mask.bits[0, 0]


def test_threshold_matches_reference_loop():
    config = SegmentationConfig(closing_radius=0)
    for seed in range(10):
        img = _noise(seed, 32, 32)
        got = segment.threshold_segment(img, config).bits
        want = oracles.eq1_reference(img, (255, 255, 255), 85.0)
        assert np.array_equal(got, want)


def test_threshold_custom_reference_and_value():
    config = SegmentationConfig(threshold=50.0, closing_radius=0, reference_color=(10, 20, 30))
    img = _noise(123, 48, 48)
    got = segment.threshold_segment(img, config).bits
    want = oracles.eq1_reference(img, (10, 20, 30), 50.0)
    assert np.array_equal(got, want)


def test_config_validation():
    with pytest.raises(ValueError):
        SegmentationConfig(threshold=-1.0)
    with pytest.raises(ValueError):
        SegmentationConfig(threshold=442.0)  # beyond the max RGB distance
    with pytest.raises(ValueError):
        SegmentationConfig(closing_radius=-2)
    with pytest.raises(ValueError):
        SegmentationConfig(reference_color=(256, 0, 0))


# ---------------------------------------------------------------------------
# Morphological closing
# ---------------------------------------------------------------------------


def test_closing_matches_brute_force_disks():
    rng = np.random.default_rng(0)
    for radius in (1, 2, 3, 5, 9):
        for _ in range(3):
            bits = rng.random((40, 52)) < 0.35
            got = segment.morphological_close(BinaryMask(bits), radius).bits
            want = oracles.closing_reference(bits, radius)
            assert np.array_equal(got, want), f"radius={radius}"


def test_closing_radius_zero_is_identity():
    bits = np.random.default_rng(1).random((30, 30)) < 0.5
    out = segment.morphological_close(BinaryMask(bits), 0)
    assert np.array_equal(out.bits, bits)


def test_closing_all_true_stays_all_true():
    bits = np.ones((64, 64), dtype=bool)
    out = segment.morphological_close(BinaryMask(bits), 9)
    assert out.bits.all()


def test_closing_all_false_stays_all_false():
    bits = np.zeros((64, 64), dtype=bool)
    out = segment.morphological_close(BinaryMask(bits), 9)
    assert not out.bits.any()


def test_closing_fills_small_holes_question_boundary():
    bits = np.ones((21, 21), dtype=bool)
    bits[10, 10] = False  # pinhole
    out = segment.morphological_close(BinaryMask(bits), 3)
    assert out.bits.all()


def test_closing_idempotent_and_extensive():
    rng = np.random.default_rng(2)
    for _ in range(20):
        bits = rng.random((36, 36)) < rng.uniform(0.2, 0.8)
        mask = BinaryMask(bits)
        once = segment.morphological_close(mask, 3)
        twice = segment.morphological_close(once, 3)
        assert np.array_equal(once.bits, twice.bits)  # idempotence
        assert (once.bits | bits).sum() == once.bits.sum()  # contains input


def test_mask_value_model():
    with pytest.raises(InvalidDimensions):
        BinaryMask(np.zeros((0, 4), dtype=bool))
    with pytest.raises(InvalidDimensions):
        BinaryMask(np.zeros((4, 4), dtype=np.uint8))
    mask = BinaryMask(np.eye(4, dtype=bool), magnification=2.5)
    assert mask.width_px == 4 and mask.height_px == 4
    assert mask.tissue_pixels == 4
    assert mask.tissue_fraction == 0.25
    assert mask.magnification == 2.5


# ---------------------------------------------------------------------------
# Dice, rescaling, mask files
# ---------------------------------------------------------------------------


def test_dice_identical_disjoint_empty():
    a = BinaryMask(np.array([[True, False], [False, False]]))
    b = BinaryMask(np.array([[False, True], [False, False]]))
    assert segment.dice(a, a) == 1.0
    assert segment.dice(a, b) == 0.0
    empty = BinaryMask(np.zeros((2, 2), dtype=bool))
    assert segment.dice(empty, empty) == 1.0
    with pytest.raises(DimensionMismatch):
        segment.dice(a, BinaryMask(np.zeros((3, 3), dtype=bool)))


def test_dice_known_value():
    a = BinaryMask(np.array([[True, True, False, False]]))
    b = BinaryMask(np.array([[True, False, True, False]]))
    # 2*|inter| / (|a|+|b|) = 2*1/(2+2)
    assert segment.dice(a, b) == 0.5


def test_rescale_mask_nearest_neighbor():
    bits = np.array([[True, False], [False, True]])
    mask = BinaryMask(bits, magnification=10.0)
    up = segment.rescale_mask(mask, 4, 4)
    want = np.array(
        [
            [True, True, False, False],
            [True, True, False, False],
            [False, False, True, True],
            [False, False, True, True],
        ]
    )
    assert np.array_equal(up.bits, want)
    assert up.magnification == 20.0
    down = segment.rescale_mask(up, 2, 2)
    assert np.array_equal(down.bits, bits)


def test_mask_png_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    bits = rng.random((37, 53)) < 0.4
    mask = BinaryMask(bits, magnification=2.5)
    path = tmp_path / "mask.png"
    segment.save_mask(mask, path)
    back = segment.load_mask(path)
    assert np.array_equal(back.bits, bits)
    assert back.magnification == 2.5


def test_load_mask_default_magnification(tmp_path):
    from PIL import Image

    path = tmp_path / "plain.png"
    Image.fromarray((np.eye(8) * 255).astype(np.uint8), mode="L").save(path)
    mask = segment.load_mask(path)
    assert mask.magnification == 1.0
    assert mask.tissue_pixels == 8


# ---------------------------------------------------------------------------
# Slide-level segmentation
# ---------------------------------------------------------------------------


def test_segment_slide_ground_truth_agreement(small_slide):
    pyramid, truth = small_slide
    mask = segment.segment_slide(pyramid, SegmentationConfig(), level=0)
    assert mask.magnification == pyramid.base_magnification
    assert segment.dice(mask, truth) > 0.99


def test_segment_slide_defaults_to_lowest_resolution(small_slide):
    pyramid, _ = small_slide
    mask = segment.segment_slide(pyramid, SegmentationConfig())
    lowest = pyramid.levels[-1]
    assert mask.bits.shape == (lowest.height_px, lowest.width_px)
    assert mask.magnification == lowest.magnification
