"""Glass policies, tile classification, and slide recompression."""

from __future__ import annotations

import numpy as np
import pytest

from wsipack import codecs, pipeline, segment, tiffio
from wsipack.codecs import CodecFamily, CodecSpec
from wsipack.errors import MaskRequired
from wsipack.pipeline import (
    GlassPolicy,
    PolicyKind,
    RuntimeBreakdown,
    TileClass,
    TileClassKind,
)
from wsipack.segment import BinaryMask, SegmentationConfig
from wsipack.tiffio import TileRef


# ---------------------------------------------------------------------------
# Policies and classes
# ---------------------------------------------------------------------------


def test_policy_parse_and_labels():
    keep = GlassPolicy.parse("keep")
    assert keep.kind == PolicyKind.KEEP
    assert keep.label == "keep"

    sc = GlassPolicy.parse("single-color")
    assert sc.kind == PolicyKind.SINGLE_COLOR
    assert sc.fill == (255, 255, 255)
    assert sc.label == "single-color:FFFFFF"

    custom = GlassPolicy.parse("empty-tiles:1A2B3C")
    assert custom.kind == PolicyKind.EMPTY_TILES
    assert custom.fill == (0x1A, 0x2B, 0x3C)
    assert GlassPolicy.parse(custom.label) == custom

    with pytest.raises(ValueError):
        GlassPolicy.parse("discard")
    with pytest.raises(ValueError):
        GlassPolicy.parse("single-color:XYZ123")


def test_tile_class_from_fraction_boundaries():
    assert TileClass.from_fraction(0.0).kind == TileClassKind.ALL_GLASS
    assert TileClass.from_fraction(1.0).kind == TileClassKind.ALL_TISSUE
    assert TileClass.from_fraction(1e-9).kind == TileClassKind.MIXED
    assert TileClass.from_fraction(1.0 - 1e-9).kind == TileClassKind.MIXED
    with pytest.raises(ValueError):
        TileClass.from_fraction(1.5)


def test_classify_tile_uses_in_extent_window():
    from wsipack.tiffio import PyramidLevel

    level = PyramidLevel(0, 100, 100, 64, 64, 1.0, 40.0)
    bits = np.zeros((100, 100), dtype=bool)
    bits[:, :64] = True  # left tile column all tissue
    mask = BinaryMask(bits)
    assert pipeline.classify_tile(mask, level, TileRef(0, 0, 0)).kind == TileClassKind.ALL_TISSUE
    # right tiles are 36 px wide in-extent, fully glass
    assert pipeline.classify_tile(mask, level, TileRef(0, 1, 0)).kind == TileClassKind.ALL_GLASS
    with pytest.raises(ValueError):
        pipeline.classify_tile(BinaryMask(np.zeros((50, 50), bool)), level, TileRef(0, 0, 0))


def test_policy_pixels_semantics():
    pixels = np.full((8, 8, 3), 40, dtype=np.uint8)
    region = np.zeros((8, 8), dtype=bool)
    region[:, :4] = True  # left half tissue
    mixed = TileClass.from_fraction(0.5)
    glass = TileClass.from_fraction(0.0)
    tissue = TileClass.from_fraction(1.0)

    keep = GlassPolicy.keep()
    assert pipeline.policy_pixels(pixels, mixed, region, keep) is pixels

    sc = GlassPolicy.single_color((250, 250, 250))
    painted = pipeline.policy_pixels(pixels, mixed, region, sc)
    assert (painted[:, :4] == 40).all()
    assert (painted[:, 4:] == 250).all()
    assert (pixels == 40).all()  # input untouched

    solid = pipeline.policy_pixels(pixels, glass, np.zeros((8, 8), bool), sc)
    assert (solid == 250).all()

    et = GlassPolicy.empty_tiles((250, 250, 250))
    assert pipeline.policy_pixels(pixels, glass, None, et) is None
    assert pipeline.policy_pixels(pixels, tissue, None, et) is pixels
    still_painted = pipeline.policy_pixels(pixels, mixed, region, et)
    assert (still_painted[:, 4:] == 250).all()

    with pytest.raises(ValueError):
        pipeline.policy_pixels(pixels, mixed, None, sc)


def test_apply_policy_encodes_or_drops():
    pixels = np.full((16, 16, 3), 77, dtype=np.uint8)
    region = np.zeros((16, 16), dtype=bool)
    spec = CodecSpec(CodecFamily.PNG)
    payload = pipeline.apply_policy(
        pixels, TileClass.from_fraction(0.0), region, GlassPolicy.single_color(), spec
    )
    decoded = codecs.decode_payload(payload, spec)
    assert (decoded == 255).all()
    dropped = pipeline.apply_policy(
        pixels, TileClass.from_fraction(0.0), region, GlassPolicy.empty_tiles(), spec
    )
    assert dropped is None


def test_size_reduction():
    assert pipeline.size_reduction(60, 100) == pytest.approx(40.0)
    assert pipeline.size_reduction(100, 100) == 0.0
    assert pipeline.size_reduction(110, 100) == pytest.approx(-10.0)
    with pytest.raises(ValueError):
        pipeline.size_reduction(10, 0)


def test_runtime_breakdown_categories_and_invariants():
    rb = RuntimeBreakdown.from_stages(
        total_s=10.0, read_s=1.0, decompress_s=2.0, segment_s=0.5, compress_s=3.0, write_s=1.5
    )
    assert rb.other_s == pytest.approx(2.0)
    report = rb.as_report()
    assert list(report.keys()) == [
        "Read tiles (I/O)",
        "Decompress tiles",
        "Segmentation",
        "Compress",
        "Write (I/O)",
        "Other",
        "Total",
    ]
    named = rb.read_s + rb.decompress_s + rb.segment_s + rb.compress_s + rb.write_s
    assert named + rb.other_s == pytest.approx(rb.total_s)

    # A total below the stage sum still keeps other_s non-negative.
    clamped = RuntimeBreakdown.from_stages(total_s=1.0, read_s=2.0)
    assert clamped.other_s == 0.0
    assert clamped.total_s >= 2.0


# ---------------------------------------------------------------------------
# Slide recompression
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def slide_path(tmp_path_factory):
    from wsipack.synth import SynthSpec, generate_slide

    pyramid, _ = generate_slide(
        SynthSpec(seed=42, width_px=1024, height_px=768, n_levels=2, glass_tile_frac=0.34)
    )
    path = tmp_path_factory.mktemp("pipe") / "slide.tiff"
    tiffio.write_pyramid(pyramid, path)
    return path


def test_recompress_policy_size_ordering(slide_path, tmp_path):
    jpeg = CodecSpec(CodecFamily.JPEG, 90)
    config = SegmentationConfig()
    sizes = {}
    for policy in (GlassPolicy.keep(), GlassPolicy.single_color(), GlassPolicy.empty_tiles()):
        result = pipeline.recompress_slide(
            slide_path,
            tmp_path / f"{policy.kind.value}.tiff",
            policy,
            codec=jpeg,
            mask_source=None if policy.kind == PolicyKind.KEEP else config,
        )
        sizes[policy.kind] = result.size_bytes
    assert sizes[PolicyKind.EMPTY_TILES] < sizes[PolicyKind.SINGLE_COLOR]
    assert sizes[PolicyKind.SINGLE_COLOR] <= sizes[PolicyKind.KEEP]


def test_recompress_requires_mask_for_glass_policies(slide_path, tmp_path):
    with pytest.raises(MaskRequired):
        pipeline.recompress_slide(
            slide_path, tmp_path / "x.tiff", GlassPolicy.empty_tiles()
        )


def test_recompress_report_and_output_semantics(slide_path, tmp_path):
    out = tmp_path / "et.tiff"
    result = pipeline.recompress_slide(
        slide_path,
        out,
        GlassPolicy.empty_tiles((240, 240, 240)),
        codec=CodecSpec(CodecFamily.JPEG, 90),
        mask_source=SegmentationConfig(),
        baseline_bytes=1_000_000,
    )
    report = result.report
    assert report.out_bytes == out.stat().st_size == result.size_bytes
    assert report.baseline_bytes == 1_000_000
    assert report.reduction_pct == pytest.approx(
        pipeline.size_reduction(result.size_bytes, 1_000_000)
    )
    assert report.policy_label == "empty-tiles:F0F0F0"
    assert report.tile_classes["all_glass"] > 0
    assert sum(
        v
        for k, v in report.tile_classes.items()
        if k in ("all_glass", "mixed", "all_tissue", "already_empty")
    ) == sum(lvl.tile_count for lvl in tiffio.open_pyramid(slide_path).levels)

    back = tiffio.open_pyramid(out)
    assert back.background_color == (240, 240, 240)
    statuses = back.tile_status_counts()
    assert statuses["empty"] == report.tile_classes["all_glass"]

    rb = result.runtime
    named = rb.read_s + rb.decompress_s + rb.segment_s + rb.compress_s + rb.write_s
    assert rb.other_s >= 0.0
    assert named <= rb.total_s + 1e-9


def test_recompress_never_decodes_dropped_tiles(slide_path, tmp_path, monkeypatch):
    pyramid = tiffio.open_pyramid(slide_path)
    mask = segment.segment_slide(pyramid, SegmentationConfig(), level=0)
    level0 = pyramid.levels[0]
    all_glass = {
        ref
        for ref in pyramid.iter_tiles(0)
        if pipeline.classify_tile(mask, level0, ref).kind == TileClassKind.ALL_GLASS
    }
    assert all_glass, "fixture must contain all-glass tiles"

    decoded_refs = []
    original = tiffio.TiledPyramid.read_tile

    def spying_read_tile(self, ref):
        decoded_refs.append(ref)
        return original(self, ref)

    monkeypatch.setattr(tiffio.TiledPyramid, "read_tile", spying_read_tile)
    pipeline.recompress_slide(
        pyramid,
        tmp_path / "et.tiff",
        GlassPolicy.empty_tiles(),
        codec=CodecSpec(CodecFamily.JPEG, 90),
        mask_source=mask,
    )
    assert not (set(decoded_refs) & all_glass)


def test_recompress_threads_give_identical_output(slide_path, tmp_path):
    jpeg = CodecSpec(CodecFamily.JPEG, 90)
    config = SegmentationConfig()
    one = tmp_path / "t1.tiff"
    four = tmp_path / "t4.tiff"
    pipeline.recompress_slide(
        slide_path, one, GlassPolicy.single_color(), codec=jpeg, mask_source=config, threads=1
    )
    pipeline.recompress_slide(
        slide_path, four, GlassPolicy.single_color(), codec=jpeg, mask_source=config, threads=4
    )
    assert one.read_bytes() == four.read_bytes()


def test_recompress_keep_roundtrips_payloads(slide_path, tmp_path):
    out = tmp_path / "keep_same_codec.tiff"
    result = pipeline.recompress_slide(slide_path, out, GlassPolicy.keep())
    back = tiffio.open_pyramid(out)
    source = tiffio.open_pyramid(slide_path)
    assert back.tile_codec.family == source.tile_codec.family
    assert [lvl.width_px for lvl in back.levels] == [lvl.width_px for lvl in source.levels]
    assert result.report.tile_classes.get("already_empty", 0) == 0


def test_recompress_from_mask_file(slide_path, tmp_path):
    pyramid = tiffio.open_pyramid(slide_path)
    mask = segment.segment_slide(pyramid, SegmentationConfig(), level=0)
    mask_path = tmp_path / "m.png"
    segment.save_mask(mask, mask_path)
    result = pipeline.recompress_slide(
        slide_path,
        tmp_path / "out.tiff",
        GlassPolicy.empty_tiles(),
        codec=CodecSpec(CodecFamily.JPEG, 90),
        mask_source=mask_path,
    )
    assert result.report.tile_classes["all_glass"] > 0
