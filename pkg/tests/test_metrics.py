"""Quality metrics: PSNR/SSIM, saved space, aggregation, benchmarking."""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

import oracles
from wsipack import codecs, metrics
from wsipack.codecs import CodecFamily, CodecSpec
from wsipack.errors import CodecUnavailable, DimensionMismatch, EmptyInput


def _noise(seed: int, h: int = 64, w: int = 64) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


# ---------------------------------------------------------------------------
# PSNR
# ---------------------------------------------------------------------------


def test_psnr_exact_cases():
    black = np.zeros((16, 16, 3), dtype=np.uint8)
    white = np.full((16, 16, 3), 255, dtype=np.uint8)
    assert metrics.psnr(black, white) == 0.0
    assert metrics.psnr(black, black) == math.inf
    assert metrics.psnr(white, white) == math.inf


def test_psnr_known_value():
    a = np.zeros((8, 8, 3), dtype=np.uint8)
    b = np.full((8, 8, 3), 16, dtype=np.uint8)
    # MSE = 256, PSNR = 10*log10(255^2/256)
    assert metrics.psnr(a, b) == pytest.approx(10 * math.log10(255**2 / 256))


def test_psnr_is_joint_over_channels():
    a = np.zeros((8, 8, 3), dtype=np.uint8)
    b = a.copy()
    b[:, :, 0] = 30  # error in one channel only
    expected_mse = (30**2) / 3
    assert metrics.psnr(a, b) == pytest.approx(10 * math.log10(255**2 / expected_mse))


def test_psnr_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        metrics.psnr(np.zeros((4, 4, 3), np.uint8), np.zeros((5, 4, 3), np.uint8))


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------


def test_ssim_identical_is_exactly_one():
    img = _noise(0)
    assert metrics.ssim(img, img) == 1.0


def test_ssim_matches_reference_windows():
    for seed in range(10):
        a = _noise(seed)
        rng = np.random.default_rng(1000 + seed)
        b = np.clip(
            a.astype(int) + rng.integers(-30, 31, size=a.shape), 0, 255
        ).astype(np.uint8)
        got = metrics.ssim(a, b)
        want = oracles.ssim_reference(a, b)
        assert got == pytest.approx(want, abs=1e-6), f"seed={seed}"


def test_ssim_constant_vs_constant_closed_form():
    c1 = (0.01 * 255) ** 2
    for va, vb in ((0, 255), (10, 200), (128, 128), (255, 0)):
        a = np.full((32, 32, 3), va, dtype=np.uint8)
        b = np.full((32, 32, 3), vb, dtype=np.uint8)
        want = (2 * va * vb + c1) / (va * va + vb * vb + c1)
        assert metrics.ssim(a, b) == pytest.approx(want, abs=1e-9)


def test_ssim_degrades_with_noise_amplitude():
    a = _noise(3, 96, 96)
    rng = np.random.default_rng(4)
    scores = []
    for amp in (5, 20, 60):
        noisy = np.clip(a.astype(int) + rng.integers(-amp, amp + 1, a.shape), 0, 255)
        scores.append(metrics.ssim(a, noisy.astype(np.uint8)))
    assert scores[0] > scores[1] > scores[2]


def test_ssim_requires_rgb_uint8():
    rng = np.random.default_rng(5)
    gray = rng.integers(0, 256, size=(48, 48), dtype=np.uint8)
    with pytest.raises(ValueError):
        metrics.ssim(gray, gray)
    floats = rng.random((48, 48, 3)).astype(np.float32)
    with pytest.raises(ValueError):
        metrics.ssim(floats, floats)


def test_ssim_minimum_size_guard():
    tiny = np.zeros((8, 8, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        metrics.ssim(tiny, tiny)


# ---------------------------------------------------------------------------
# bpp and saved space
# ---------------------------------------------------------------------------


def test_bpp():
    assert metrics.bpp(1000, 100, 100) == pytest.approx(0.8)
    assert metrics.bpp(0, 10, 10) == 0.0
    with pytest.raises(ValueError):
        metrics.bpp(10, 0, 5)


def test_saved_space_three_patch_hand_case():
    # (10 -> 6 kB) = 40%, (10 -> 10) = 0%, (10 -> 11) = -10%; mean = 10%
    per_patch = [(6_000, 10_000), (10_000, 10_000), (11_000, 10_000)]
    assert metrics.saved_space(per_patch) == pytest.approx(10.0, abs=1e-9)


def test_saved_space_is_mean_of_ratios_not_ratio_of_totals():
    per_patch = [(1, 2), (100_000, 100_000)]
    assert metrics.saved_space(per_patch) == pytest.approx(25.0)


def test_saved_space_empty_input():
    with pytest.raises(EmptyInput):
        metrics.saved_space([])


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def test_aggregate_population_statistics():
    stats = metrics.aggregate([1.0, 2.0, 3.0, 4.0])
    assert stats.mean == 2.5
    assert stats.std == pytest.approx(math.sqrt(1.25))
    assert stats.min == 1.0 and stats.max == 4.0 and stats.n == 4
    with pytest.raises(EmptyInput):
        metrics.aggregate([])


def test_aggregate_handles_infinities():
    all_inf = metrics.aggregate([math.inf, math.inf])
    assert all_inf.mean == math.inf and all_inf.std == 0.0
    mixed = metrics.aggregate([1.0, math.inf])
    assert mixed.mean == math.inf and mixed.std == math.inf


# ---------------------------------------------------------------------------
# Patch-set evaluation
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def patch_images():
    rng = np.random.default_rng(6)
    from PIL import Image

    images = []
    for _ in range(6):
        coarse = rng.integers(30, 226, size=(16, 16, 3), dtype=np.uint8)
        images.append(
            np.asarray(Image.fromarray(coarse).resize((64, 64), Image.Resampling.BILINEAR))
        )
    return images


def test_baseline_against_itself_saves_nothing(patch_images):
    baseline = CodecSpec(CodecFamily.JPEG, 90)
    rows = metrics.evaluate_patch_set(patch_images, [baseline], baseline=baseline)
    assert rows[0].saved_space_pct == 0.0
    assert rows[0].total_bytes == rows[0].baseline_total_bytes


def test_evaluate_reports_per_codec(patch_images):
    rows = metrics.evaluate_patch_set(
        patch_images,
        [CodecSpec(CodecFamily.JPEG, 90), CodecSpec(CodecFamily.PNG), CodecSpec(CodecFamily.MOCK_LEARNED, 6)],
    )
    by_label = {r.codec_label: r for r in rows}
    assert set(by_label) == {"jpeg:90", "png", "mock-learned:6"}
    png_row = by_label["png"]
    assert png_row.ssim.mean == 1.0
    assert png_row.psnr.mean == math.inf
    assert png_row.n == len(patch_images)
    assert len(png_row.reports) == png_row.n
    for row in rows:
        assert row.total_bytes == sum(r.bytes for r in row.reports)
        # bpp accounts for every stored byte, including side streams
        total_pixels = sum(img.shape[0] * img.shape[1] for img in patch_images)
        assert sum(r.bpp for r in row.reports) == pytest.approx(
            sum(r.bytes * 8 / (64 * 64) for r in row.reports)
        )
        assert total_pixels == 6 * 64 * 64


def test_mock_bytes_include_side_stream(patch_images):
    spec = CodecSpec(CodecFamily.MOCK_LEARNED, 6)
    rows = metrics.evaluate_patch_set(patch_images[:2], [spec])
    enc = codecs.encode(patch_images[0], spec)
    assert rows[0].reports[0].bytes == len(enc.primary_bytes) + len(enc.side_bytes)
    assert rows[0].reports[0].bpp == pytest.approx(
        (len(enc.primary_bytes) + len(enc.side_bytes)) * 8 / (64 * 64)
    )


def test_unavailable_codec_yields_placeholder_row(patch_images):
    unavailable = [f for f in CodecFamily if not codecs.is_available(f)]
    if not unavailable:
        pytest.skip("every codec family is available on this install")
    rows = metrics.evaluate_patch_set(patch_images, [CodecSpec(unavailable[0])])
    row = rows[0]
    assert row.available is False
    assert row.n == 0 and row.ssim is None and row.reports == ()


def test_unavailable_baseline_raises(patch_images):
    unavailable = [f for f in CodecFamily if not codecs.is_available(f)]
    if not unavailable:
        pytest.skip("every codec family is available on this install")
    with pytest.raises(CodecUnavailable):
        metrics.evaluate_patch_set(patch_images, [], baseline=CodecSpec(unavailable[0]))


def test_keep_decoded_returns_pixel_arrays(patch_images):
    rows, decoded = metrics.evaluate_patch_set(
        patch_images[:3], [CodecSpec(CodecFamily.PNG)], keep_decoded=True
    )
    assert set(decoded) == {"png"}
    assert all(
        np.array_equal(d, img) for d, img in zip(decoded["png"], patch_images[:3])
    )


# ---------------------------------------------------------------------------
# RD curves and worst cases
# ---------------------------------------------------------------------------


def test_rd_curve_sorted_and_monotone(patch_images):
    points = metrics.rd_curve(patch_images, CodecFamily.JPEG, [90, 70, 80])
    assert [p.quality_param for p in points] == [70, 80, 90]
    bpps = [p.mean_bpp for p in points]
    assert bpps == sorted(bpps)
    assert all(p.n == len(patch_images) for p in points)
    assert [p.codec_label for p in points] == ["jpeg:70", "jpeg:80", "jpeg:90"]


def test_rd_curve_unavailable_family(patch_images):
    unavailable = [f for f in CodecFamily if not codecs.is_available(f)]
    if not unavailable:
        pytest.skip("every codec family is available on this install")
    with pytest.raises(CodecUnavailable):
        metrics.rd_curve(patch_images, unavailable[0], [1.0])


def test_worst_cases_ranking_and_files(tmp_path, patch_images):
    spec = CodecSpec(CodecFamily.JPEG, 40)
    rows, decoded = metrics.evaluate_patch_set(patch_images, [spec], keep_decoded=True)
    row = rows[0]
    cases = metrics.worst_cases(
        patch_images, decoded[spec.label], list(row.reports), 3, tmp_path / "wc"
    )
    assert len(cases) == 3
    ssims = [c.ssim for c in cases]
    assert ssims == sorted(ssims)
    assert ssims[0] == min(r.ssim for r in row.reports)
    meta = json.loads((tmp_path / "wc" / "worst_cases.json").read_text())
    assert len(meta) == 3
    for case, entry in zip(cases, meta):
        diff_path = tmp_path / "wc" / entry["diff_file"]
        stored = np.load(diff_path)
        assert stored.dtype == np.float32
        assert np.array_equal(stored, case.diff)
        original_gray = patch_images[case.index].astype(np.float64).mean(axis=2)
        decoded_gray = decoded[spec.label][case.index].astype(np.float64).mean(axis=2)
        assert np.allclose(case.diff, (decoded_gray - original_gray).astype(np.float32))


def test_worst_cases_validates_lengths(patch_images):
    with pytest.raises(ValueError):
        metrics.worst_cases(patch_images, patch_images[:2], [], 1)


def test_json_safe_replaces_non_finite():
    blob = {"a": math.inf, "b": [1.0, math.nan], "c": {"d": -math.inf, "e": 2}}
    safe = metrics.json_safe(blob)
    assert safe == {"a": None, "b": [1.0, None], "c": {"d": None, "e": 2}}
    json.dumps(safe, allow_nan=False)  # must not raise
