"""Linear frequency separation of images into low and high bands.

The low band is the image filtered with a small moving-average kernel; the
high band is whatever remains, so ``low + high`` always reconstructs the
input exactly. Filtering runs per channel with mirror boundary handling
(reflection without repeating the edge sample), which keeps the local mean
unbiased at image borders.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

__all__ = [
    "FilterBank",
    "FrequencyPair",
    "validate_image",
    "make_moving_average",
    "lowpass",
    "highpass",
    "decompose",
]


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check an (H, W, C) image array and return it as float64.

    Raises ValueError for wrong rank, unsupported channel count, empty
    spatial dims, or non-finite values.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C) array, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"empty image: shape {arr.shape}")
    if c not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {c}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class FilterBank:
    """A low-pass kernel and its implied high-pass complement.

    The high-pass kernel is never materialized: high = img - low, which
    equals convolving with (unit impulse - lowpass_weights).
    """

    kernel_size: int
    lowpass_weights: np.ndarray
    boundary_mode: str = "reflect"

    def __post_init__(self) -> None:
        k = self.kernel_size
        if k < 1 or k % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {k}")
        w = np.asarray(self.lowpass_weights, dtype=np.float64)
        if w.shape != (k, k):
            raise ValueError(f"weights shape {w.shape} does not match kernel_size {k}")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError(f"lowpass weights must sum to 1, got {w.sum()!r}")
        if self.boundary_mode != "reflect":
            raise ValueError(f"unsupported boundary_mode {self.boundary_mode!r}")
        object.__setattr__(self, "lowpass_weights", w)

    @property
    def radius(self) -> int:
        return self.kernel_size // 2


@dataclass(frozen=True)
class FrequencyPair:
    """Low/high band split of one image; low + high equals the source."""

    low: np.ndarray
    high: np.ndarray


def make_moving_average(kernel_size: int) -> FilterBank:
    """Uniform k x k averaging kernel; every weight is 1/k^2."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel_size must be odd and positive, got {kernel_size}")
    w = np.full((kernel_size, kernel_size), 1.0 / kernel_size**2, dtype=np.float64)
    return FilterBank(kernel_size=kernel_size, lowpass_weights=w)


def lowpass(img: np.ndarray, fb: FilterBank) -> np.ndarray:
    """Filter each channel with the low-pass kernel, mirror boundaries.

    Output has the same shape as the input and is not clamped; values may
    leave [0, 1].
    """
    arr = validate_image(img)
    out = np.empty_like(arr)
    for c in range(arr.shape[2]):
        # scipy's "mirror" mode reflects without repeating the edge sample,
        # matching np.pad(mode="reflect").
        ndimage.correlate(arr[:, :, c], fb.lowpass_weights, output=out[:, :, c], mode="mirror")
    return out


def highpass(img: np.ndarray, fb: FilterBank) -> np.ndarray:
    """Remainder after low-pass filtering; signed, zero-mean for flat input."""
    arr = validate_image(img)
    return arr - lowpass(arr, fb)


def decompose(img: np.ndarray, fb: FilterBank) -> FrequencyPair:
    """Split an image into (low, high) bands that sum back to the input."""
    arr = validate_image(img)
    low = lowpass(arr, fb)
    return FrequencyPair(low=low, high=arr - low)
