"""Separable bicubic resampling with antialiasing.

Follows the classic imresize semantics: align-centers coordinate mapping,
Keys cubic kernel with a = -0.5, kernel stretched by the scale factor when
downscaling with antialiasing, per-pixel weight renormalization, and edge
replication at the borders. Rows and columns are resampled independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import validate_image

__all__ = ["ResampleSpec", "cubic_kernel", "resize_plan", "bicubic_resize"]

_KERNEL_SUPPORT = 4.0  # cubic kernel is nonzero on (-2, 2)


@dataclass(frozen=True)
class ResampleSpec:
    """How to resample one axis pair: output length = input / factor."""

    factor: float
    kernel: str = "keys_cubic"
    antialias: bool = True

    def __post_init__(self) -> None:
        if not (self.factor > 0 and np.isfinite(self.factor)):
            raise ValueError(f"factor must be positive and finite, got {self.factor}")
        if self.kernel != "keys_cubic":
            raise ValueError(f"unsupported kernel {self.kernel!r}")


def cubic_kernel(x):
    """Keys cubic convolution kernel with a = -0.5.

    Accepts scalars or arrays; support is |x| < 2.
    """
    a = -0.5
    ax = np.abs(np.asarray(x, dtype=np.float64))
    ax2 = ax * ax
    ax3 = ax2 * ax
    inner = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    outer = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    out = np.where(ax <= 1.0, inner, np.where(ax < 2.0, outer, 0.0))
    if np.isscalar(x):
        return float(out)
    return out


def resize_plan(in_length: int, factor: float, antialias: bool = True):
    """Per-output-pixel source indices and normalized weights for one axis.

    Returns (indices, weights), each of shape (out_length, taps). Output
    pixel centers map to input coordinate (i + 0.5) * factor - 0.5. When
    downscaling with antialiasing the kernel support widens by the factor.
    Indices are clamped to the valid range, which replicates edge samples.
    """
    out_length = int(np.floor(in_length / factor))
    if out_length < 1:
        raise ValueError(
            f"degenerate output: input length {in_length} with factor {factor}"
        )
    u = (np.arange(out_length, dtype=np.float64) + 0.5) * factor - 0.5
    if antialias and factor > 1:
        scale = float(factor)
        width = _KERNEL_SUPPORT * scale
    else:
        scale = 1.0
        width = _KERNEL_SUPPORT
    left = np.floor(u - width / 2.0)
    taps = int(np.ceil(width)) + 2
    indices = left[:, None] + np.arange(taps, dtype=np.float64)[None, :]
    weights = cubic_kernel((u[:, None] - indices) / scale) / scale
    weights = weights / weights.sum(axis=1, keepdims=True)
    indices = np.clip(indices, 0, in_length - 1).astype(np.int64)
    return indices, weights


def _resize_axis0(arr: np.ndarray, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
    out = np.zeros((indices.shape[0],) + arr.shape[1:], dtype=np.float64)
    for t in range(indices.shape[1]):
        out += weights[:, t, None, None] * arr[indices[:, t]]
    return out


def bicubic_resize(img: np.ndarray, spec: ResampleSpec) -> np.ndarray:
    """Resample both axes of an (H, W, C) image, clamping the result to [0, 1].

    Output shape is (floor(H / factor), floor(W / factor), C).
    """
    arr = validate_image(img)
    h, w, _ = arr.shape
    idx_r, w_r = resize_plan(h, spec.factor, spec.antialias)
    idx_c, w_c = resize_plan(w, spec.factor, spec.antialias)
    out = _resize_axis0(arr, idx_r, w_r)
    out = _resize_axis0(out.transpose(1, 0, 2), idx_c, w_c).transpose(1, 0, 2)
    return np.clip(out, 0.0, 1.0)
