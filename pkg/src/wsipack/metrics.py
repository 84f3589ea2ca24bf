"""Image-quality metrics, saved-space accounting, and benchmark tables.

Metric conventions (pinned here because the underlying methods tolerate
variation):

* SSIM uses the canonical 11x11 Gaussian window with sigma 1.5,
  K1 = 0.01, K2 = 0.03, L = 255, evaluated on fully valid windows only
  (a 5-pixel margin is cropped), per channel, then averaged over channels.
* PSNR is ``10 * log10(255^2 / MSE)`` with one MSE over all pixels and
  channels jointly; identical inputs give ``+inf``.
* Saved space is the mean over patches of ``(1 - compressed/jpeg) * 100``
  (per-patch ratios averaged, not a ratio of byte totals); byte totals are
  also reported separately.
* Decode times are measured serially on in-memory bytes, and the reported
  mean excludes the first 10 decodes (warm-up) when more than 10 patches
  are present, otherwise it averages all of them.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from . import codecs
from .codecs import CodecFamily, CodecSpec
from .errors import CodecUnavailable, DimensionMismatch, EmptyInput

__all__ = [
    "AggregateStats",
    "CodecEvaluation",
    "QualityReport",
    "RDPoint",
    "WorstCase",
    "aggregate",
    "bpp",
    "evaluate_patch_set",
    "json_safe",
    "psnr",
    "rd_curve",
    "saved_space",
    "ssim",
    "worst_cases",
]

_WINDOW = 11
_SIGMA = 1.5
_MARGIN = _WINDOW // 2
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"images have different shapes: {a.shape} vs {b.shape}")
    if a.ndim != 3 or a.shape[2] != 3 or a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ValueError("expected two (h, w, 3) uint8 images")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; ``+inf`` for identical inputs."""
    _check_pair(a, b)
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def _gaussian() -> np.ndarray:
    offsets = np.arange(_WINDOW, dtype=np.float64) - (_WINDOW - 1) / 2
    g = np.exp(-(offsets**2) / (2.0 * _SIGMA * _SIGMA))
    return g / g.sum()


_G = _gaussian()


def _smooth(x: np.ndarray) -> np.ndarray:
    # Separable Gaussian; border values are cropped by the caller, so the
    # boundary mode is irrelevant to the result.
    return correlate1d(correlate1d(x, _G, axis=0, mode="constant"), _G, axis=1, mode="constant")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over valid windows, averaged over channels."""
    _check_pair(a, b)
    h, w, _ = a.shape
    if h < _WINDOW or w < _WINDOW:
        raise ValueError(f"images must be at least {_WINDOW}x{_WINDOW}, got {w}x{h}")
    crop = slice(_MARGIN, -_MARGIN)
    total = 0.0
    for c in range(3):
        x = a[:, :, c].astype(np.float64)
        y = b[:, :, c].astype(np.float64)
        mu_x = _smooth(x)
        mu_y = _smooth(y)
        var_x = _smooth(x * x) - mu_x * mu_x
        var_y = _smooth(y * y) - mu_y * mu_y
        cov = _smooth(x * y) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + _C1) * (2.0 * cov + _C2)
        den = (mu_x * mu_x + mu_y * mu_y + _C1) * (var_x + var_y + _C2)
        total += float(np.mean((num / den)[crop, crop]))
    return total / 3.0


def bpp(encoded_total_bytes: int, w: int, h: int) -> float:
    """Bits per pixel of an encoded representation."""
    if w < 1 or h < 1:
        raise ValueError(f"dimensions must be >= 1, got {w}x{h}")
    if encoded_total_bytes < 0:
        raise ValueError(f"byte count must be >= 0, got {encoded_total_bytes}")
    return encoded_total_bytes * 8.0 / (w * h)


def saved_space(per_patch: list[tuple[int, int]]) -> float:
    """Mean per-patch saved space percentage vs the JPEG baseline bytes."""
    if not per_patch:
        raise EmptyInput("saved_space needs at least one patch")
    total = 0.0
    for compressed, jpeg in per_patch:
        if jpeg <= 0:
            raise ValueError(f"baseline bytes must be positive, got {jpeg}")
        total += (1.0 - compressed / jpeg) * 100.0
    return total / len(per_patch)


@dataclass(frozen=True)
class AggregateStats:
    """Mean/spread summary of a value list (population standard deviation)."""

    mean: float
    std: float
    min: float
    max: float
    n: int

    def as_report(self) -> dict:
        return {"mean": self.mean, "std": self.std, "min": self.min, "max": self.max, "n": self.n}


def aggregate(values: list[float]) -> AggregateStats:
    """Summarize values; raises :class:`EmptyInput` on an empty list."""
    if len(values) == 0:
        raise EmptyInput("cannot aggregate zero values")
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if np.isfinite(arr).all():
        std = float(arr.std())
    else:
        # Infinite entries (e.g. PSNR of identical images): the spread is 0
        # when every value matches, unbounded otherwise.
        std = 0.0 if lo == hi else math.inf
    return AggregateStats(mean=float(arr.mean()), std=std, min=lo, max=hi, n=len(values))


@dataclass(frozen=True)
class QualityReport:
    """Per-patch quality and cost measurements for one codec."""

    ssim: float
    psnr_db: float
    bytes: int
    bpp: float
    saved_space_pct: float
    dec_time_s: float

    def as_report(self) -> dict:
        return {
            "ssim": self.ssim,
            "psnr_db": self.psnr_db,
            "bytes": self.bytes,
            "bpp": self.bpp,
            "saved_space_pct": self.saved_space_pct,
            "dec_time_s": self.dec_time_s,
        }


@dataclass(frozen=True)
class CodecEvaluation:
    """Aggregated benchmark row for one codec spec."""

    codec_label: str
    available: bool
    n: int
    ssim: AggregateStats | None
    psnr: AggregateStats | None
    bpp: AggregateStats | None
    saved_space_pct: float | None
    mean_dec_time_s: float | None
    total_bytes: int
    baseline_total_bytes: int
    reports: tuple[QualityReport, ...]

    def as_report(self) -> dict:
        return {
            "codec": self.codec_label,
            "available": self.available,
            "n": self.n,
            "ssim": self.ssim.as_report() if self.ssim else None,
            "psnr_db": self.psnr.as_report() if self.psnr else None,
            "bpp": self.bpp.as_report() if self.bpp else None,
            "saved_space_pct": self.saved_space_pct,
            "mean_dec_time_s": self.mean_dec_time_s,
            "total_bytes": self.total_bytes,
            "baseline_total_bytes": self.baseline_total_bytes,
            "patches": [r.as_report() for r in self.reports],
        }


def _pixels_of(patch) -> np.ndarray:
    return patch.pixels if hasattr(patch, "pixels") else np.asarray(patch)


def _mean_dec_time(times: list[float]) -> float:
    kept = times[10:] if len(times) > 10 else times
    return sum(kept) / len(kept)


def evaluate_patch_set(
    patches: list,
    specs: list[CodecSpec],
    baseline: CodecSpec = CodecSpec(CodecFamily.JPEG, 90),
    keep_decoded: bool = False,
) -> list[CodecEvaluation] | tuple[list[CodecEvaluation], dict[str, list[np.ndarray]]]:
    """Encode/decode every patch under every spec and aggregate quality.

    Unavailable codecs produce a row with ``available=False`` instead of
    failing.  Baseline bytes (for saved space) are computed once per patch.
    With ``keep_decoded=True`` also returns the decoded pixel arrays per
    codec label, for difference-map inspection.
    """
    images = [_pixels_of(p) for p in patches]
    if not images:
        raise EmptyInput("evaluate_patch_set needs at least one patch")
    if not codecs.is_available(baseline.family):
        raise CodecUnavailable(f"baseline codec {baseline.label} is unavailable")
    baseline_bytes = [codecs.encode(img, baseline).size_bytes for img in images]

    rows: list[CodecEvaluation] = []
    decoded_by_label: dict[str, list[np.ndarray]] = {}
    for spec in specs:
        if not codecs.is_available(spec.family):
            rows.append(
                CodecEvaluation(
                    codec_label=spec.label,
                    available=False,
                    n=0,
                    ssim=None,
                    psnr=None,
                    bpp=None,
                    saved_space_pct=None,
                    mean_dec_time_s=None,
                    total_bytes=0,
                    baseline_total_bytes=sum(baseline_bytes),
                    reports=(),
                )
            )
            continue
        encoded = [codecs.encode(img, spec) for img in images]
        decoded: list[np.ndarray] = []
        times: list[float] = []
        for enc in encoded:  # serial, to keep decode timing uncontended
            start = time.perf_counter()
            img = codecs.decode(enc)
            times.append(time.perf_counter() - start)
            decoded.append(img)
        reports = []
        for img, dec, enc, base, t in zip(images, decoded, encoded, baseline_bytes, times):
            h, w = img.shape[:2]
            reports.append(
                QualityReport(
                    ssim=ssim(img, dec),
                    psnr_db=psnr(img, dec),
                    bytes=enc.size_bytes,
                    bpp=bpp(enc.size_bytes, w, h),
                    saved_space_pct=(1.0 - enc.size_bytes / base) * 100.0,
                    dec_time_s=t,
                )
            )
        rows.append(
            CodecEvaluation(
                codec_label=spec.label,
                available=True,
                n=len(reports),
                ssim=aggregate([r.ssim for r in reports]),
                psnr=aggregate([r.psnr_db for r in reports]),
                bpp=aggregate([r.bpp for r in reports]),
                saved_space_pct=saved_space([(r.bytes, b) for r, b in zip(reports, baseline_bytes)]),
                mean_dec_time_s=_mean_dec_time(times),
                total_bytes=sum(r.bytes for r in reports),
                baseline_total_bytes=sum(baseline_bytes),
                reports=tuple(reports),
            )
        )
        if keep_decoded:
            decoded_by_label[spec.label] = decoded
    if keep_decoded:
        return rows, decoded_by_label
    return rows


@dataclass(frozen=True)
class RDPoint:
    """One rate-distortion sample: quality setting vs mean bpp/SSIM/PSNR."""

    codec_label: str
    quality_param: float
    mean_bpp: float
    mean_ssim: float
    mean_psnr: float
    n: int


def rd_curve(patches: list, family: CodecFamily, qualities: list) -> list[RDPoint]:
    """Evaluate one codec family over a quality sweep, sorted by mean bpp."""
    if not codecs.is_available(family):
        raise CodecUnavailable(f"codec {family.value} is unavailable")
    points: list[RDPoint] = []
    for quality in qualities:
        spec = CodecSpec(family, quality)
        (row,) = evaluate_patch_set(patches, [spec], baseline=spec)
        points.append(
            RDPoint(
                codec_label=spec.label,
                quality_param=float(quality),
                mean_bpp=row.bpp.mean,
                mean_ssim=row.ssim.mean,
                mean_psnr=row.psnr.mean,
                n=row.n,
            )
        )
    return sorted(points, key=lambda pt: pt.mean_bpp)


@dataclass(frozen=True, eq=False)
class WorstCase:
    """A low-SSIM patch with its signed grayscale difference map."""

    rank: int
    index: int
    ssim: float
    psnr_db: float
    diff: np.ndarray  # float32, gray(decoded) - gray(original)


def _gray(img: np.ndarray) -> np.ndarray:
    return img.astype(np.float64).mean(axis=2)


def worst_cases(
    originals: list[np.ndarray],
    decodeds: list[np.ndarray],
    reports: list[QualityReport],
    k: int,
    out_dir: str | Path | None = None,
) -> list[WorstCase]:
    """The k lowest-SSIM patches with difference maps.

    The difference map is ``gray(decoded) - gray(original)`` where gray
    averages the RGB channels.  With ``out_dir`` set, each map is written
    as a signed ``.npy`` file next to a ``worst_cases.json`` metadata
    index.
    """
    if not len(originals) == len(decodeds) == len(reports):
        raise ValueError(
            f"got {len(originals)} originals, {len(decodeds)} decoded, {len(reports)} reports"
        )
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    order = sorted(range(len(reports)), key=lambda i: reports[i].ssim)[:k]
    cases = []
    for rank, index in enumerate(order):
        diff = (_gray(decodeds[index]) - _gray(originals[index])).astype(np.float32)
        cases.append(
            WorstCase(
                rank=rank,
                index=index,
                ssim=reports[index].ssim,
                psnr_db=reports[index].psnr_db,
                diff=diff,
            )
        )
    if out_dir is not None:
        root = Path(out_dir)
        root.mkdir(parents=True, exist_ok=True)
        meta = []
        for case in cases:
            name = f"diff_{case.rank:03d}_patch{case.index}.npy"
            np.save(root / name, case.diff)
            meta.append(
                json_safe(
                    {
                        "rank": case.rank,
                        "patch_index": case.index,
                        "ssim": case.ssim,
                        "psnr_db": case.psnr_db,
                        "diff_file": name,
                    }
                )
            )
        (root / "worst_cases.json").write_text(json.dumps(meta, indent=2))
    return cases


def json_safe(value):
    """Recursively replace non-finite floats with None for JSON output."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {k: json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    return value
