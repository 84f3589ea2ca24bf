"""Patch and tile codecs behind a single encode/decode interface.

Families:

* ``jpeg`` -- lossy baseline JPEG (libjpeg via Pillow), integer quality
  1-100, 4:2:0 chroma subsampling to match common scanner output.
* ``png`` -- lossless PNG via the package's own size-reducing encoder
  (:mod:`wsipack.pngio`); no quality parameter.
* ``jpeg-xl`` -- optional; requires a Pillow JPEG XL plugin or
  ``imagecodecs``.  Quality is the Butteraugli distance (0 = lossless
  direction, larger = lossier).
* ``jpeg-2000`` -- optional; irreversible JPEG 2000 targeting a PSNR in dB
  (requires Pillow built with OpenJPEG).
* ``mock-learned`` -- a deterministic stand-in for a learned autoencoder:
  2x box downsampling, uniform quantization with step ``2**(8 - quality)``
  (clamped to [1, 64]), zlib entropy packing.  It produces a primary
  bitstream plus a small side-information blob, mirroring the two-file
  layout learned codecs emit.  Quality 8 with a step of 1 reconstructs
  2x2-block-constant images exactly.

Optional families degrade softly: :func:`is_available` reports support and
:func:`encode`/:func:`decode` raise :class:`~wsipack.errors.CodecUnavailable`
instead of failing at import time.
"""

from __future__ import annotations

import io
import struct
import time
import zlib
from dataclasses import dataclass
from enum import Enum

import numpy as np
from PIL import Image, features

from . import pngio
from .errors import CodecUnavailable, DecodeFailure

__all__ = [
    "CodecFamily",
    "CodecSpec",
    "EncodedPatch",
    "available_families",
    "decode",
    "decode_payload",
    "encode",
    "encode_payload",
    "is_available",
    "timed_decode",
]


class CodecFamily(str, Enum):
    """Supported compression families."""

    JPEG = "jpeg"
    PNG = "png"
    JPEG_XL = "jpeg-xl"
    JPEG_2000 = "jpeg-2000"
    MOCK_LEARNED = "mock-learned"


_DEFAULT_QUALITY: dict[CodecFamily, float | int | None] = {
    CodecFamily.JPEG: 90,
    CodecFamily.PNG: None,
    CodecFamily.JPEG_XL: 1.0,
    CodecFamily.JPEG_2000: 37,
    CodecFamily.MOCK_LEARNED: 6,
}


def _detect_jxl() -> bool:
    try:  # A Pillow plugin registers JXL support on import.
        import pillow_jxl  # noqa: F401

        return True
    except ImportError:
        pass
    try:
        import imagecodecs

        return bool(getattr(imagecodecs, "JPEGXL", False))
    except ImportError:
        return False


_HAVE_JXL = _detect_jxl()
_HAVE_J2K = bool(features.check("jpg_2000"))


def is_available(family: CodecFamily) -> bool:
    """Return whether *family* can actually encode/decode on this install."""
    if family == CodecFamily.JPEG_XL:
        return _HAVE_JXL
    if family == CodecFamily.JPEG_2000:
        return _HAVE_J2K
    return True


def available_families() -> list[CodecFamily]:
    """All families usable on this install, in declaration order."""
    return [f for f in CodecFamily if is_available(f)]


@dataclass(frozen=True)
class CodecSpec:
    """A codec family plus its quality setting.

    The meaning of ``quality`` depends on the family: JPEG quality factor
    (1-100), JPEG XL Butteraugli distance (float >= 0), JPEG 2000 PSNR
    target in dB (> 0), mock-learned quality level (1-8).  PNG is lossless
    and takes no quality.  ``quality=None`` selects the family default.
    """

    family: CodecFamily
    quality: float | int | None = None

    def __post_init__(self) -> None:
        q = self.quality
        if q is None:
            return
        if self.family == CodecFamily.PNG:
            raise ValueError("png is lossless and takes no quality setting")
        if self.family == CodecFamily.JPEG and not (
            isinstance(q, int) and 1 <= q <= 100
        ):
            raise ValueError(f"jpeg quality must be an integer in [1, 100], got {q!r}")
        if self.family == CodecFamily.JPEG_XL and not q >= 0:
            raise ValueError(f"jpeg-xl distance must be >= 0, got {q!r}")
        if self.family == CodecFamily.JPEG_2000 and not q > 0:
            raise ValueError(f"jpeg-2000 dB target must be > 0, got {q!r}")
        if self.family == CodecFamily.MOCK_LEARNED and not (
            isinstance(q, int) and 1 <= q <= 8
        ):
            raise ValueError(f"mock-learned quality must be an integer in [1, 8], got {q!r}")

    @property
    def resolved_quality(self) -> float | int | None:
        """The quality in effect, substituting the family default for None."""
        if self.quality is None:
            return _DEFAULT_QUALITY[self.family]
        return self.quality

    @property
    def label(self) -> str:
        """Stable human/CLI-facing name, e.g. ``jpeg:90`` or ``png``."""
        q = self.resolved_quality
        return self.family.value if q is None else f"{self.family.value}:{q:g}"

    @classmethod
    def parse(cls, text: str) -> "CodecSpec":
        """Parse ``family`` or ``family:quality`` as used on the CLI."""
        name, _, qtext = text.partition(":")
        try:
            family = CodecFamily(name.strip().lower())
        except ValueError:
            valid = ", ".join(f.value for f in CodecFamily)
            raise ValueError(f"unknown codec {name!r}; expected one of: {valid}") from None
        if not qtext:
            return cls(family)
        try:
            quality: float | int = int(qtext)
        except ValueError:
            try:
                quality = float(qtext)
            except ValueError:
                raise ValueError(f"bad quality {qtext!r} in codec spec {text!r}") from None
        return cls(family, quality)


@dataclass(frozen=True)
class EncodedPatch:
    """An encoded image: a primary bitstream plus optional side information.

    Single-stream codecs leave ``side_bytes`` empty; the mock learned codec
    stores dimensions and the quality echo there, mirroring codecs that
    write separate latent/hyperlatent files.
    """

    spec: CodecSpec
    primary_bytes: bytes
    side_bytes: bytes = b""

    @property
    def size_bytes(self) -> int:
        """Total storage cost: primary plus side information."""
        return len(self.primary_bytes) + len(self.side_bytes)


def _require(spec: CodecSpec) -> None:
    if not is_available(spec.family):
        raise CodecUnavailable(f"codec {spec.family.value} is not available on this install")


def _check_image(image: np.ndarray) -> np.ndarray:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError(
            f"expected (h, w, 3) uint8 image, got shape {image.shape} dtype {image.dtype}"
        )
    return np.ascontiguousarray(image)


_MOCK_MAGIC = b"MLC1"
_MOCK_HEADER = struct.Struct("<4sIIIIB")


def _mock_step(quality: int) -> int:
    return int(min(64, max(1, 2 ** (8 - quality))))


def _box_down2(image: np.ndarray) -> np.ndarray:
    """2x box-filter downsample with edge replication for odd dimensions."""
    h, w, _ = image.shape
    if h % 2 or w % 2:
        image = np.pad(image, ((0, h % 2), (0, w % 2), (0, 0)), mode="edge")
    acc = image.astype(np.uint16)
    summed = acc[0::2, 0::2] + acc[0::2, 1::2] + acc[1::2, 0::2] + acc[1::2, 1::2]
    return ((summed + 2) // 4).astype(np.uint8)


def _mock_encode(image: np.ndarray, quality: int) -> tuple[bytes, bytes]:
    h, w, _ = image.shape
    small = _box_down2(image)
    dh, dw, _ = small.shape
    step = _mock_step(quality)
    indices = np.rint(small.astype(np.float64) / step).astype(np.uint8)
    primary = zlib.compress(indices.tobytes(), 9)
    side = _MOCK_HEADER.pack(_MOCK_MAGIC, w, h, dw, dh, quality)
    return primary, side


def _mock_decode(primary: bytes, side: bytes, quality: int) -> np.ndarray:
    if len(side) != _MOCK_HEADER.size:
        raise DecodeFailure(f"mock-learned side information has {len(side)} bytes, expected {_MOCK_HEADER.size}")
    magic, w, h, dw, dh, stored_quality = _MOCK_HEADER.unpack(side)
    if magic != _MOCK_MAGIC:
        raise DecodeFailure("mock-learned side information has a bad magic value")
    if stored_quality != quality:
        raise DecodeFailure(
            f"mock-learned quality mismatch: stream says {stored_quality}, spec says {quality}"
        )
    try:
        raw = zlib.decompress(primary)
    except zlib.error as exc:
        raise DecodeFailure(f"mock-learned bitstream is corrupt: {exc}") from exc
    if len(raw) != dh * dw * 3:
        raise DecodeFailure(
            f"mock-learned bitstream decodes to {len(raw)} bytes, expected {dh * dw * 3}"
        )
    step = _mock_step(quality)
    small = np.frombuffer(raw, np.uint8).reshape(dh, dw, 3)
    small = np.minimum(small.astype(np.uint16) * step, 255).astype(np.uint8)
    big = small.repeat(2, axis=0).repeat(2, axis=1)
    return np.ascontiguousarray(big[:h, :w])


def _pil_encode(image: np.ndarray, spec: CodecSpec) -> bytes:
    pil = Image.fromarray(image, "RGB")
    buf = io.BytesIO()
    q = spec.resolved_quality
    if spec.family == CodecFamily.JPEG:
        pil.save(buf, "JPEG", quality=int(q), subsampling=2)
    elif spec.family == CodecFamily.JPEG_2000:
        pil.save(buf, "JPEG2000", quality_mode="dB", quality_layers=[float(q)], irreversible=True)
    elif spec.family == CodecFamily.JPEG_XL:
        pil.save(buf, "JXL", distance=float(q))
    else:  # pragma: no cover - guarded by callers
        raise ValueError(f"no Pillow path for {spec.family}")
    return buf.getvalue()


def encode(image: np.ndarray, spec: CodecSpec) -> EncodedPatch:
    """Encode an RGB image under *spec*.

    Raises:
        CodecUnavailable: if the family's backing codec is not installed.
        ValueError: if the image is not an ``(h, w, 3)`` uint8 array.
    """
    image = _check_image(image)
    _require(spec)
    if spec.family == CodecFamily.PNG:
        return EncodedPatch(spec, pngio.encode_rgb(image))
    if spec.family == CodecFamily.MOCK_LEARNED:
        primary, side = _mock_encode(image, int(spec.resolved_quality))
        return EncodedPatch(spec, primary, side)
    return EncodedPatch(spec, _pil_encode(image, spec))


def decode(encoded: EncodedPatch) -> np.ndarray:
    """Decode an :class:`EncodedPatch` back to an ``(h, w, 3)`` uint8 array."""
    _require(encoded.spec)
    if encoded.spec.family == CodecFamily.MOCK_LEARNED:
        return _mock_decode(
            encoded.primary_bytes, encoded.side_bytes, int(encoded.spec.resolved_quality)
        )
    return decode_payload(encoded.primary_bytes, encoded.spec.family)


def decode_payload(data: bytes, family: CodecFamily) -> np.ndarray:
    """Decode a single-stream payload (as stored in TIFF tiles).

    The mock learned codec is two-stream and cannot appear here; use
    :func:`decode` with a full :class:`EncodedPatch` for it.
    """
    if family == CodecFamily.MOCK_LEARNED:
        raise DecodeFailure("mock-learned payloads need side information; decode via EncodedPatch")
    if not is_available(family):
        raise CodecUnavailable(f"codec {family.value} is not available on this install")
    if not data:
        raise DecodeFailure("empty payload")
    try:
        with Image.open(io.BytesIO(data)) as pil:
            return np.asarray(pil.convert("RGB"))
    except DecodeFailure:
        raise
    except Exception as exc:
        raise DecodeFailure(f"payload failed to decode: {exc}") from exc


def encode_payload(image: np.ndarray, spec: CodecSpec) -> bytes:
    """Encode to a single-stream payload suitable for a TIFF tile."""
    if spec.family == CodecFamily.MOCK_LEARNED:
        raise ValueError("mock-learned produces side information and cannot be stored as a TIFF tile")
    return encode(image, spec).primary_bytes


def timed_decode(encoded: EncodedPatch) -> tuple[np.ndarray, float]:
    """Decode and report wall-clock decode time in seconds."""
    start = time.perf_counter()
    image = decode(encoded)
    return image, time.perf_counter() - start
