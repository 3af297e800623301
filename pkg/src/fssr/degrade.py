"""Image corruption simulators and ground-truth pair construction.

Two corruption families are supported: zero-mean Gaussian sensor noise
(sigma given in 8-bit pixel units) and JPEG compression at a fixed quality.
The JPEG codec is pinned to Pillow's libjpeg encoder with 4:2:0 chroma
subsampling so results are reproducible; the settings are exported for
embedding in dataset manifests.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .kernels import validate_image
from .resample import ResampleSpec, bicubic_resize

__all__ = [
    "DegradationSpec",
    "JPEG_ENCODER_SETTINGS",
    "add_sensor_noise",
    "jpeg_degrade",
    "apply_degradation",
    "make_gt_pair",
]

DEGRADATION_KINDS = ("gaussian_noise", "jpeg", "none")

# Pinned codec configuration; recorded in manifests of datasets that used it.
JPEG_ENCODER_SETTINGS = {
    "codec": "Pillow/libjpeg",
    "chroma_subsampling": "4:2:0",
    "progressive": False,
    "optimize": False,
}


@dataclass(frozen=True)
class DegradationSpec:
    """One corruption process: kind plus its parameters and a base seed."""

    kind: str
    sigma: float = 0.0
    quality: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in DEGRADATION_KINDS:
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if self.kind == "gaussian_noise" and self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.kind == "jpeg" and not 1 <= self.quality <= 100:
            raise ValueError(f"quality must be in [1, 100], got {self.quality}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sigma": self.sigma,
            "quality": self.quality,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DegradationSpec":
        return cls(
            kind=d["kind"],
            sigma=d.get("sigma", 0.0),
            quality=d.get("quality", 30),
            seed=d.get("seed", 0),
        )


def add_sensor_noise(img: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise with std sigma/255, clamp to [0, 1].

    Deterministic for a fixed (img, sigma, seed).
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    arr = validate_image(img)
    if sigma == 0:
        return arr
    rng = np.random.Generator(np.random.PCG64(seed))
    noise = rng.standard_normal(arr.shape) * (sigma / 255.0)
    return np.clip(arr + noise, 0.0, 1.0)


def jpeg_degrade(img: np.ndarray, quality: int) -> np.ndarray:
    """Round-trip a 3-channel image through the pinned JPEG encoder."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in [1, 100], got {quality}")
    arr = validate_image(img)
    if arr.shape[2] != 3:
        raise ValueError(f"jpeg degradation needs 3 channels, got {arr.shape[2]}")
    as_u8 = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(as_u8, mode="RGB").save(
        buf,
        format="JPEG",
        quality=quality,
        subsampling=2,  # 4:2:0
        optimize=JPEG_ENCODER_SETTINGS["optimize"],
        progressive=JPEG_ENCODER_SETTINGS["progressive"],
    )
    buf.seek(0)
    decoded = np.asarray(PILImage.open(buf).convert("RGB"), dtype=np.float64)
    return decoded / 255.0


def apply_degradation(img: np.ndarray, spec: DegradationSpec, seed: int | None = None) -> np.ndarray:
    """Apply one corruption process; `seed` overrides spec.seed for noise."""
    if spec.kind == "none":
        return validate_image(img)
    if spec.kind == "gaussian_noise":
        return add_sensor_noise(img, spec.sigma, spec.seed if seed is None else seed)
    return jpeg_degrade(img, spec.quality)


def make_gt_pair(clean_hr: np.ndarray, spec: DegradationSpec, factor: float):
    """Build an oracle (hr, lr) pair by corrupting both scales.

    The LR image is the downscaled clean image run through the same
    corruption process. Noise draws are independent per image: the HR side
    uses spec.seed and the LR side spec.seed + 1.
    """
    clean = validate_image(clean_hr)
    clean_lr = bicubic_resize(clean, ResampleSpec(factor=factor))
    hr = apply_degradation(clean, spec, seed=spec.seed)
    lr = apply_degradation(clean_lr, spec, seed=spec.seed + 1)
    return hr, lr
