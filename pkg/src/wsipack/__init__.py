"""Storage reduction and codec benchmarking for tiled slide pyramids.

The package reads and writes classic tiled pyramidal TIFF files with
sparse-tile support, segments tissue from glass, rewrites slides under
glass-discarding policies, extracts patch pyramids, and benchmarks tile
codecs with SSIM/PSNR/bits-per-pixel metrics.  A synthetic slide
generator with exact ground truth backs the test suite and the examples.
"""

from .codecs import CodecFamily, CodecSpec, EncodedPatch, available_families, decode, encode, is_available
from .errors import (
    CodecUnavailable,
    CorruptDirectory,
    DecodeFailure,
    DimensionMismatch,
    EmptyInput,
    InsufficientPatches,
    InvalidDimensions,
    InvalidLevel,
    InvalidSpec,
    IoFailure,
    MagnificationUnavailable,
    MaskRequired,
    MissingPatch,
    NotTiled,
    UnsupportedCodec,
    WsiPackError,
)
from .metrics import (
    AggregateStats,
    CodecEvaluation,
    QualityReport,
    RDPoint,
    bpp,
    evaluate_patch_set,
    psnr,
    rd_curve,
    saved_space,
    ssim,
    worst_cases,
)
from .patches import (
    PatchPyramidManifest,
    PatchRecord,
    PatchSpec,
    build_balanced_set,
    build_patch_pyramid,
    extract_patches,
    plan_patches,
    select_level_with_fallback,
    stitch,
)
from .pipeline import (
    GlassPolicy,
    PolicyKind,
    RecompressResult,
    RuntimeBreakdown,
    SizeReductionReport,
    TileClass,
    TileClassKind,
    classify_tile,
    recompress_slide,
    size_reduction,
)
from .segment import (
    BinaryMask,
    SegmentationConfig,
    color_distance,
    dice,
    load_mask,
    morphological_close,
    rescale_mask,
    save_mask,
    segment_slide,
    threshold_segment,
)
from .synth import SynthSpec, generate_slide
from .tiffio import (
    PyramidLevel,
    TiledPyramid,
    TileRef,
    level_for_magnification,
    open_pyramid,
    write_pyramid,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # codecs
    "CodecFamily",
    "CodecSpec",
    "EncodedPatch",
    "available_families",
    "decode",
    "encode",
    "is_available",
    # errors
    "WsiPackError",
    "NotTiled",
    "UnsupportedCodec",
    "CorruptDirectory",
    "DecodeFailure",
    "InvalidLevel",
    "CodecUnavailable",
    "MagnificationUnavailable",
    "InsufficientPatches",
    "MissingPatch",
    "DimensionMismatch",
    "InvalidDimensions",
    "InvalidSpec",
    "MaskRequired",
    "EmptyInput",
    "IoFailure",
    # metrics
    "AggregateStats",
    "CodecEvaluation",
    "QualityReport",
    "RDPoint",
    "bpp",
    "evaluate_patch_set",
    "psnr",
    "rd_curve",
    "saved_space",
    "ssim",
    "worst_cases",
    # patches
    "PatchPyramidManifest",
    "PatchRecord",
    "PatchSpec",
    "build_balanced_set",
    "build_patch_pyramid",
    "extract_patches",
    "plan_patches",
    "select_level_with_fallback",
    "stitch",
    # pipeline
    "GlassPolicy",
    "PolicyKind",
    "RecompressResult",
    "RuntimeBreakdown",
    "SizeReductionReport",
    "TileClass",
    "TileClassKind",
    "classify_tile",
    "recompress_slide",
    "size_reduction",
    # segmentation
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
    # synthetic slides
    "SynthSpec",
    "generate_slide",
    # pyramid I/O
    "PyramidLevel",
    "TiledPyramid",
    "TileRef",
    "level_for_magnification",
    "open_pyramid",
    "write_pyramid",
]
