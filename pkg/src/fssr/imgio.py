"""Image file I/O: lossless 16-bit PNG for pipeline data, 8-bit for export.

Pipeline images live on disk as 16-bit PNGs so storage never re-introduces
compression artifacts into corruption experiments. Reading accepts 8- and
16-bit PNG as well as JPEG (decode only).
"""

from __future__ import annotations

import os

import cv2
import numpy as np

__all__ = ["read_image", "write_png16", "write_png8"]


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Load an image file as (H, W, C) float64 in [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"cannot read image: {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    if raw.shape[2] == 4:
        raw = raw[:, :, :3]
    if raw.shape[2] == 3:
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    if raw.dtype == np.uint8:
        return raw.astype(np.float64) / 255.0
    if raw.dtype == np.uint16:
        return raw.astype(np.float64) / 65535.0
    raise IOError(f"unsupported image dtype {raw.dtype} in {path}")


def _prep(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"expected (H, W, 1|3) image, got shape {arr.shape}")
    return np.clip(arr, 0.0, 1.0)


def _to_bgr(arr: np.ndarray) -> np.ndarray:
    if arr.shape[2] == 3:
        return cv2.cvtColor(arr, cv2.COLOR_RGB2BGR)
    return arr[:, :, 0]


def write_png16(path: str | os.PathLike, img: np.ndarray) -> None:
    arr = np.round(_prep(img) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), _to_bgr(arr)):
        raise IOError(f"cannot write image: {path}")


def write_png8(path: str | os.PathLike, img: np.ndarray) -> None:
    arr = np.round(_prep(img) * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(path), _to_bgr(arr)):
        raise IOError(f"cannot write image: {path}")
