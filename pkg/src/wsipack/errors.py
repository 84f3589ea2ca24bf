"""Exception types raised across the package.

Every error that crosses a module boundary derives from :class:`WsiPackError`
so callers (including the CLI) can catch one base class and still tell the
failure modes apart.
"""

from __future__ import annotations


class WsiPackError(Exception):
    """Base class for all errors raised by this package."""


class NotTiled(WsiPackError):
    """The TIFF file stores its pixel data in strips, not tiles."""


class UnsupportedCodec(WsiPackError):
    """A compression scheme or pixel layout this package cannot handle."""


class CorruptDirectory(WsiPackError):
    """A TIFF directory chain that is structurally unreadable."""


class DecodeFailure(WsiPackError):
    """A tile or patch payload that fails to decode to the expected shape."""


class InvalidLevel(WsiPackError):
    """A pyramid level index outside the available range."""


class CodecUnavailable(WsiPackError):
    """A codec whose backing implementation is not installed."""


class MagnificationUnavailable(WsiPackError):
    """No pyramid level lies close enough to a requested magnification."""


class InsufficientPatches(WsiPackError):
    """A patch set too small to satisfy a sampling request."""


class MissingPatch(WsiPackError):
    """A stitch target pixel not covered by any supplied patch."""


class DimensionMismatch(WsiPackError):
    """Two buffers or masks whose dimensions were required to agree."""


class InvalidDimensions(WsiPackError):
    """A mask or image with an empty or otherwise impossible extent."""


class InvalidSpec(WsiPackError):
    """A generation or extraction spec with out-of-range fields."""


class MaskRequired(WsiPackError):
    """A glass policy that needs a tissue mask was given none."""


class EmptyInput(WsiPackError):
    """An aggregate requested over zero values."""


class IoFailure(WsiPackError):
    """A filesystem read or write that failed."""
