"""Command-line frontend: convert, segment, patch, bench, rd, synth.

Configuration precedence is flags > config file > defaults.  The config
file (``--config``) is a JSON object whose keys are the long option names
of the chosen subcommand with dashes replaced by underscores, e.g.
``{"policy": "empty-tiles", "codec": "jpeg:90", "threads": 4}``.

Exit codes: 0 success; 1 runtime failure (bad input, I/O); 2 usage error;
3 requested codec unavailable on this install.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import codecs, metrics, patches, pipeline, segment, synth, tiffio
from .codecs import CodecFamily, CodecSpec
from .errors import CodecUnavailable, WsiPackError
from .patches import PatchSpec
from .pipeline import GlassPolicy
from .segment import SegmentationConfig

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_CODEC_UNAVAILABLE = 3

_THREADS_ENV = "WSIPACK_THREADS"


def _fmt_bytes(n: int) -> str:
    """Human-readable size with the 1 kB = 1024 bytes convention."""
    if n >= 1024 * 1024:
        return f"{n} bytes ({n / (1024 * 1024):.1f} MB)"
    if n >= 1024:
        return f"{n} bytes ({n / 1024:.1f} kB)"
    return f"{n} bytes"


def _parse_color(text: str) -> tuple[int, int, int]:
    m = re.fullmatch(r"#?([0-9a-fA-F]{6})", text.strip())
    if not m:
        raise argparse.ArgumentTypeError(f"expected RRGGBB hex color, got {text!r}")
    v = int(m.group(1), 16)
    return ((v >> 16) & 0xFF, (v >> 8) & 0xFF, v & 0xFF)


def _default_threads() -> int:
    raw = os.environ.get(_THREADS_ENV, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_json_report(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(metrics.json_safe(payload), indent=2) + "\n")


def _apply_config(args: argparse.Namespace, parser_defaults: dict) -> argparse.Namespace:
    """Merge flags > config file > defaults (flags were parsed with None defaults)."""
    config = {}
    if getattr(args, "config", None):
        config = json.loads(Path(args.config).read_text())
        if not isinstance(config, dict):
            raise WsiPackError(f"config file {args.config} must hold a JSON object")
    for key, default in parser_defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    return args


# --------------------------------------------------------------------------
# synth
# --------------------------------------------------------------------------

# Maps synth option names to SynthSpec field names.
_SYNTH_FIELD_BY_OPTION = {
    "seed": "seed",
    "width": "width_px",
    "height": "height_px",
    "levels": "n_levels",
    "tile": "tile_px",
    "glass_frac": "glass_tile_frac",
    "blobs": "blob_count",
    "noise_amp": "glass_noise_amp",
    "lines": "artifact_lines",
    "blob_scale": "blob_scale",
    "magnification": "base_magnification",
}

_SYNTH_DEFAULTS = {
    **{option: None for option in _SYNTH_FIELD_BY_OPTION},
    "spec_json": None,
    "report_file": None,
}


def _cmd_synth(args: argparse.Namespace) -> int:
    args = _apply_config(args, _SYNTH_DEFAULTS)
    fields = dict(_SYNTH_DEFAULTS_BY_FIELD)
    if args.spec_json:
        fields.update(json.loads(Path(args.spec_json).read_text()))
    # Flags (and config entries) override the spec JSON only where given.
    for option, field in _SYNTH_FIELD_BY_OPTION.items():
        value = getattr(args, option)
        if value is not None:
            fields[field] = value
    spec = synth.SynthSpec(**fields)

    pyramid, mask = synth.generate_slide(spec)
    out = Path(args.out)
    size = tiffio.write_pyramid(pyramid, out)
    mask_path = out.with_suffix(".mask.png")
    segment.save_mask(mask, mask_path)
    spec_path = out.with_suffix(".synth.json")
    spec_path.write_text(json.dumps(fields, indent=2) + "\n")

    print(f"slide: {out} {_fmt_bytes(size)}")
    print(f"mask: {mask_path} tissue_fraction={mask.tissue_fraction:.4f}")
    print(f"spec: {spec_path}")
    _write_json_report(
        args.report_file,
        {
            "out": str(out),
            "mask": str(mask_path),
            "spec": fields,
            "bytes": size,
            "tissue_fraction": mask.tissue_fraction,
            "levels": [
                {
                    "index": lvl.index,
                    "width_px": lvl.width_px,
                    "height_px": lvl.height_px,
                    "magnification": lvl.magnification,
                }
                for lvl in pyramid.levels
            ],
        },
    )
    return EXIT_OK


_SYNTH_DEFAULTS_BY_FIELD = {
    "seed": 0,
    "width_px": 2048,
    "height_px": 1536,
    "n_levels": 3,
    "tile_px": 256,
    "glass_tile_frac": 0.25,
    "blob_count": 12,
    "glass_noise_amp": 8,
    "artifact_lines": 0,
    "blob_scale": 1.0,
    "base_magnification": 40.0,
}


# --------------------------------------------------------------------------
# segment
# --------------------------------------------------------------------------

_SEGMENT_DEFAULTS = {
    "threshold": 85.0,
    "radius": 9,
    "reference": (255, 255, 255),
    "level": None,
    "truth": None,
    "report_file": None,
}


def _cmd_segment(args: argparse.Namespace) -> int:
    args = _apply_config(args, _SEGMENT_DEFAULTS)
    config = SegmentationConfig(
        threshold=float(args.threshold),
        closing_radius=int(args.radius),
        reference_color=tuple(args.reference),
    )
    pyramid = tiffio.open_pyramid(args.src)
    level = args.level if args.level is None else int(args.level)
    mask = segment.segment_slide(pyramid, config, level=level)
    segment.save_mask(mask, args.out)

    dice_score = None
    if args.truth:
        truth = segment.load_mask(args.truth)
        if truth.bits.shape != mask.bits.shape:
            truth = segment.rescale_mask(truth, mask.width_px, mask.height_px)
        dice_score = segment.dice(mask, truth)

    used_level = level if level is not None else len(pyramid.levels) - 1
    print(f"mask: {args.out} level={used_level} magnification=x{mask.magnification:g}")
    print(f"tissue_fraction: {mask.tissue_fraction:.4f}")
    if dice_score is not None:
        print(f"dice: {dice_score:.4f}")
    _write_json_report(
        args.report_file,
        {
            "src": str(args.src),
            "mask": str(args.out),
            "level": used_level,
            "magnification": mask.magnification,
            "threshold": config.threshold,
            "closing_radius": config.closing_radius,
            "tissue_fraction": mask.tissue_fraction,
            "dice": dice_score,
        },
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# convert
# --------------------------------------------------------------------------

_CONVERT_DEFAULTS = {
    "policy": "keep",
    "codec": None,
    "mask": None,
    "threshold": 85.0,
    "radius": 9,
    "baseline": None,
    "threads": None,
    "report_file": None,
}


def _cmd_convert(args: argparse.Namespace) -> int:
    args = _apply_config(args, _CONVERT_DEFAULTS)
    policy = GlassPolicy.parse(args.policy)
    codec = CodecSpec.parse(args.codec) if args.codec else None
    if codec is not None and not codecs.is_available(codec.family):
        raise CodecUnavailable(f"codec {codec.label} is unavailable on this install")

    mask_source: object | None
    if args.mask:
        mask_source = args.mask
    elif policy.kind != pipeline.PolicyKind.KEEP:
        mask_source = SegmentationConfig(
            threshold=float(args.threshold), closing_radius=int(args.radius)
        )
    else:
        mask_source = None

    baseline_bytes = None
    if args.baseline:
        text = str(args.baseline)
        baseline_bytes = int(text) if text.isdigit() else Path(text).stat().st_size

    threads = int(args.threads) if args.threads is not None else _default_threads()
    result = pipeline.recompress_slide(
        args.src,
        args.out,
        policy,
        codec=codec,
        mask_source=mask_source,
        baseline_bytes=baseline_bytes,
        threads=threads,
    )

    report = result.report
    print(f"out: {report.out_path} {_fmt_bytes(report.out_bytes)}")
    if report.baseline_bytes is not None:
        print(
            f"baseline: {_fmt_bytes(report.baseline_bytes)} "
            f"reduction: {report.reduction_pct:.2f}%"
        )
    if report.tile_classes:
        kinds = ", ".join(f"{k}={v}" for k, v in sorted(report.tile_classes.items()))
        print(f"tiles: {kinds}")
    for name, seconds in result.runtime.as_report().items():
        print(f"  {name}: {seconds:.3f} s")
    _write_json_report(
        args.report_file,
        {
            "src": str(args.src),
            **report.as_report(),
            "runtime": result.runtime.as_report(),
        },
    )
    return EXIT_OK


# --------------------------------------------------------------------------
# patch
# --------------------------------------------------------------------------

_PATCH_DEFAULTS = {
    "patch": 256,
    "overlap": 0.0,
    "min_tissue": 0.5,
    "pad_color": (255, 255, 255),
    "mask": None,
    "auto_mask": False,
    "policy": "keep",
    "threshold": 85.0,
    "radius": 9,
    "report_file": None,
}


def _cmd_patch(args: argparse.Namespace) -> int:
    args = _apply_config(args, _PATCH_DEFAULTS)
    policy = GlassPolicy.parse(args.policy)
    spec = PatchSpec(
        patch_px=int(args.patch),
        overlap_frac=float(args.overlap),
        min_tissue_frac=float(args.min_tissue),
        pad_color=tuple(args.pad_color),
    )
    pyramid = tiffio.open_pyramid(args.src)
    mask = None
    if args.mask:
        mask = segment.load_mask(args.mask)
    elif args.auto_mask or policy.kind != pipeline.PolicyKind.KEEP:
        config = SegmentationConfig(
            threshold=float(args.threshold), closing_radius=int(args.radius)
        )
        mask = segment.segment_slide(pyramid, config)

    manifest = patches.build_patch_pyramid(pyramid, spec, mask, policy, args.out_dir)
    print(f"patch pyramid: {manifest.out_dir}")
    print(f"files: {manifest.total_files} total {_fmt_bytes(manifest.total_bytes)}")
    for index, info in sorted(manifest.levels.items()):
        print(
            f"  level_{index}: {info['count']} patches, {_fmt_bytes(info['bytes'])}, "
            f"x{info['magnification']:g}"
        )
    _write_json_report(args.report_file, manifest.as_report())
    return EXIT_OK


# --------------------------------------------------------------------------
# bench / rd
# --------------------------------------------------------------------------


def _load_patch_dir(patch_dir: str | Path, level: int | None) -> list[np.ndarray]:
    """Load patch PNGs from a patch-pyramid directory, deterministically."""
    root = Path(patch_dir)
    if not root.is_dir():
        raise WsiPackError(f"patch directory {root} does not exist")
    entries: list[tuple[int, int, int, Path]] = []
    pattern = re.compile(r"x(\d+)_y(\d+)\.png$")
    for level_dir in sorted(root.glob("level_*")):
        try:
            level_index = int(level_dir.name.split("_", 1)[1])
        except ValueError:
            continue
        if level is not None and level_index != level:
            continue
        for path in sorted(level_dir.glob("*.png")):
            m = pattern.fullmatch(path.name)
            if m:
                entries.append((level_index, int(m.group(2)), int(m.group(1)), path))
    entries.sort(key=lambda e: e[:3])
    images = []
    for _, _, _, path in entries:
        with Image.open(path) as img:
            images.append(np.asarray(img.convert("RGB")))
    if not images:
        raise WsiPackError(f"no patches found under {root}" + (f" at level {level}" if level is not None else ""))
    return images


_BENCH_CSV_COLUMNS = [
    "codec",
    "available",
    "n",
    "ssim_mean",
    "ssim_std",
    "ssim_min",
    "ssim_max",
    "psnr_mean",
    "psnr_min",
    "psnr_max",
    "bpp_mean",
    "saved_space_pct",
    "total_bytes",
    "baseline_total_bytes",
    "mean_dec_time_s",
]


def _bench_csv(rows: list[metrics.CodecEvaluation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(_BENCH_CSV_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                row.codec_label,
                int(row.available),
                row.n,
                row.ssim.mean if row.ssim else "",
                row.ssim.std if row.ssim else "",
                row.ssim.min if row.ssim else "",
                row.ssim.max if row.ssim else "",
                row.psnr.mean if row.psnr else "",
                row.psnr.min if row.psnr else "",
                row.psnr.max if row.psnr else "",
                row.bpp.mean if row.bpp else "",
                row.saved_space_pct if row.saved_space_pct is not None else "",
                row.total_bytes,
                row.baseline_total_bytes,
                row.mean_dec_time_s if row.mean_dec_time_s is not None else "",
            ]
        )
    return buf.getvalue()


_BENCH_DEFAULTS = {
    "codecs": "jpeg:90,png,mock-learned:6",
    "baseline": "jpeg:90",
    "level": None,
    "worst": 0,
    "worst_dir": None,
    "report": "json",
    "report_file": None,
}


def _cmd_bench(args: argparse.Namespace) -> int:
    args = _apply_config(args, _BENCH_DEFAULTS)
    specs = [CodecSpec.parse(part) for part in str(args.codecs).split(",") if part.strip()]
    baseline = CodecSpec.parse(args.baseline)
    level = None if args.level is None else int(args.level)
    images = _load_patch_dir(args.patch_dir, level)

    keep = int(args.worst) > 0
    result = metrics.evaluate_patch_set(images, specs, baseline=baseline, keep_decoded=keep)
    rows, decoded = result if keep else (result, {})

    for row in rows:
        if not row.available:
            print(f"{row.codec_label}: unavailable (skipped)")
            continue
        psnr_mean = row.psnr.mean
        psnr_text = "inf" if psnr_mean == float("inf") else f"{psnr_mean:.2f}"
        print(
            f"{row.codec_label}: n={row.n} ssim={row.ssim.mean:.4f} "
            f"psnr={psnr_text} dB bpp={row.bpp.mean:.3f} "
            f"saved={row.saved_space_pct:.1f}% total={_fmt_bytes(row.total_bytes)}"
        )

    if keep:
        for row in rows:
            if row.available and row.codec_label in decoded:
                out_dir = Path(args.worst_dir or "worst_cases") / row.codec_label.replace(":", "_")
                metrics.worst_cases(
                    images, decoded[row.codec_label], list(row.reports), int(args.worst), out_dir
                )
        print(f"worst-case difference maps under: {args.worst_dir or 'worst_cases'}")

    if args.report_file:
        if args.report == "csv":
            Path(args.report_file).write_text(_bench_csv(rows))
        else:
            _write_json_report(
                args.report_file,
                {
                    "patch_dir": str(args.patch_dir),
                    "level": level,
                    "baseline": baseline.label,
                    "rows": [row.as_report() for row in rows],
                },
            )
        print(f"report: {args.report_file}")
    return EXIT_OK


_RD_DEFAULTS = {
    "family": "jpeg",
    "qualities": "70,80,90",
    "level": None,
}


def _cmd_rd(args: argparse.Namespace) -> int:
    args = _apply_config(args, _RD_DEFAULTS)
    family = CodecFamily(str(args.family).lower())
    qualities = []
    for part in str(args.qualities).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            qualities.append(int(part))
        except ValueError:
            qualities.append(float(part))
    level = None if args.level is None else int(args.level)
    images = _load_patch_dir(args.patch_dir, level)
    points = metrics.rd_curve(images, family, qualities)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["codec", "quality", "bpp", "ssim", "psnr", "n"])
    for pt in points:
        writer.writerow(
            [pt.codec_label, pt.quality_param, pt.mean_bpp, pt.mean_ssim, pt.mean_psnr, pt.n]
        )
    Path(args.out).write_text(buf.getvalue())
    print(f"rd curve: {args.out} ({len(points)} points)")
    for pt in points:
        print(f"  {pt.codec_label}: bpp={pt.mean_bpp:.3f} ssim={pt.mean_ssim:.4f}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsipack",
        description="Storage reduction and codec benchmarking for tiled slide pyramids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON config file (flags take precedence)")
        p.add_argument("--report-file", help="write a machine-readable report here")

    p = sub.add_parser("synth", help="generate a synthetic slide with ground truth")
    p.add_argument("--out", required=True, help="output TIFF path")
    p.add_argument("--spec-json", help="JSON file with generation spec fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--tile", type=int)
    p.add_argument("--glass-frac", type=float)
    p.add_argument("--blobs", type=int)
    p.add_argument("--noise-amp", type=int)
    p.add_argument("--lines", type=int)
    p.add_argument("--blob-scale", type=float)
    p.add_argument("--magnification", type=float)
    add_common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("segment", help="segment tissue and write a mask PNG")
    p.add_argument("src", help="input tiled TIFF")
    p.add_argument("--out", required=True, help="output mask PNG")
    p.add_argument("--threshold", type=float)
    p.add_argument("--radius", type=int)
    p.add_argument("--reference", type=_parse_color, help="reference color RRGGBB")
    p.add_argument("--level", type=int, help="pyramid level (default: lowest resolution)")
    p.add_argument("--truth", help="ground-truth mask PNG to score against")
    add_common(p)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("convert", help="recompress a slide under a glass policy")
    p.add_argument("src", help="input tiled TIFF")
    p.add_argument("--out", required=True, help="output tiled TIFF")
    p.add_argument("--policy", help="keep | single-color[:RRGGBB] | empty-tiles[:RRGGBB]")
    p.add_argument("--codec", help="target codec, e.g. jpeg:90 (default: keep source codec)")
    p.add_argument("--mask", help="mask PNG (default: threshold segmentation)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--radius", type=int)
    p.add_argument("--baseline", help="baseline size: a byte count or a file path")
    p.add_argument("--threads", type=int, help=f"worker threads (env {_THREADS_ENV})")
    add_common(p)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("patch", help="write a patch pyramid of PNG files")
    p.add_argument("src", help="input tiled TIFF")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--patch", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--min-tissue", type=float)
    p.add_argument("--pad-color", type=_parse_color)
    p.add_argument("--mask", help="mask PNG")
    p.add_argument("--auto-mask", action="store_const", const=True)
    p.add_argument("--policy", help="keep | single-color[:RRGGBB] | empty-tiles[:RRGGBB]")
    p.add_argument("--threshold", type=float)
    p.add_argument("--radius", type=int)
    add_common(p)
    p.set_defaults(func=_cmd_patch)

    p = sub.add_parser("bench", help="benchmark codecs on a patch pyramid")
    p.add_argument("patch_dir", help="patch pyramid directory")
    p.add_argument("--codecs", help="comma-separated codec specs, e.g. jpeg:90,png")
    p.add_argument("--baseline", help="baseline codec spec (default jpeg:90)")
    p.add_argument("--level", type=int, help="restrict to one pyramid level")
    p.add_argument("--worst", type=int, help="emit difference maps for the K lowest-SSIM patches")
    p.add_argument("--worst-dir", help="directory for difference maps")
    p.add_argument("--report", choices=["json", "csv"], help="report format (default json)")
    add_common(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("rd", help="rate-distortion sweep on a patch pyramid")
    p.add_argument("patch_dir", help="patch pyramid directory")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--family", help="codec family, e.g. jpeg")
    p.add_argument("--qualities", help="comma-separated quality settings")
    p.add_argument("--level", type=int, help="restrict to one pyramid level")
    add_common(p)
    p.set_defaults(func=_cmd_rd)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CodecUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODEC_UNAVAILABLE
    except (WsiPackError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
