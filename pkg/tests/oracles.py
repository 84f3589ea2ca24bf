"""Independent reference implementations used to verify the library.

These are written directly from the definitions, with different
mechanics than the library code (per-pixel loops, shift-accumulate
morphology, sliding-window moments), so agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def eq1_reference(
    image: np.ndarray, reference: tuple[int, int, int], threshold: float
) -> np.ndarray:
    """Per-pixel Euclidean color distance thresholding, looped."""
    h, w = image.shape[:2]
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            d = math.sqrt(
                (int(image[y, x, 0]) - reference[0]) ** 2
                + (int(image[y, x, 1]) - reference[1]) ** 2
                + (int(image[y, x, 2]) - reference[2]) ** 2
            )
            out[y, x] = d > threshold
    return out


def disk_offsets(radius: int) -> list[tuple[int, int]]:
    """All integer offsets within Euclidean distance ``radius``."""
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dx * dx + dy * dy <= radius * radius
    ]


def _shift(bits: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    """``bits`` translated by (dy, dx); vacated cells take ``fill``."""
    h, w = bits.shape
    out = np.full((h, w), fill, dtype=bool)
    ys = slice(max(0, dy), min(h, h + dy))
    xs = slice(max(0, dx), min(w, w + dx))
    ys_src = slice(max(0, -dy), min(h, h - dy))
    xs_src = slice(max(0, -dx), min(w, w - dx))
    out[ys, xs] = bits[ys_src, xs_src]
    return out


def dilate_reference(bits: np.ndarray, radius: int) -> np.ndarray:
    """OR of all disk translations; cells beyond the array are False."""
    out = np.zeros_like(bits)
    for dy, dx in disk_offsets(radius):
        out |= _shift(bits, dy, dx, fill=False)
    return out


def erode_reference(bits: np.ndarray, radius: int) -> np.ndarray:
    """AND of all disk translations; cells beyond the array are False."""
    out = np.ones_like(bits)
    for dy, dx in disk_offsets(radius):
        out &= _shift(bits, dy, dx, fill=False)
    return out


def closing_reference(bits: np.ndarray, radius: int) -> np.ndarray:
    """Dilation-then-erosion on a plane that is glass beyond the mask.

    The mask is embedded in a border of ``2 * radius`` glass cells so the
    result equals closing on an unbounded glass plane.
    """
    if radius == 0:
        return bits.copy()
    pad = 2 * radius
    padded = np.zeros((bits.shape[0] + 2 * pad, bits.shape[1] + 2 * pad), dtype=bool)
    padded[pad:-pad, pad:-pad] = bits
    closed = erode_reference(dilate_reference(padded, radius), radius)
    return closed[pad:-pad, pad:-pad]


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    offsets = np.arange(size) - (size - 1) / 2.0
    one_d = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    one_d /= one_d.sum()
    return np.outer(one_d, one_d)


def ssim_reference(a: np.ndarray, b: np.ndarray) -> float:
    """Sliding-window structural similarity, one window at a time.

    Uses direct weighted moments ``E[(x - mu)^2]`` over explicit 11x11
    windows (valid positions only) rather than separable filtering.
    """
    kernel = _gaussian_kernel()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    a = a.astype(np.float64)
    b = b.astype(np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    channel_means = []
    for c in range(a.shape[2]):
        wins_a = sliding_window_view(a[:, :, c], (11, 11))
        wins_b = sliding_window_view(b[:, :, c], (11, 11))
        mu_a = (wins_a * kernel).sum(axis=(-1, -2))
        mu_b = (wins_b * kernel).sum(axis=(-1, -2))
        da = wins_a - mu_a[..., None, None]
        db = wins_b - mu_b[..., None, None]
        var_a = (kernel * da * da).sum(axis=(-1, -2))
        var_b = (kernel * db * db).sum(axis=(-1, -2))
        cov = (kernel * da * db).sum(axis=(-1, -2))
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
        channel_means.append(float((num / den).mean()))
    return float(np.mean(channel_means))
