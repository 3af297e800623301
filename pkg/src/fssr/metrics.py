"""Quantitative evaluation: PSNR, SSIM, perceptual distance, band statistics.

PSNR and SSIM operate on float images in [0, 1] (peak 1) on RGB channels
directly. The SSIM parameters are pinned - Gaussian 11x11 window with
sigma 1.5, K1=0.01, K2=0.03, L=1, mirror boundaries - and recorded in every
report so numbers stay comparable across runs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy import ndimage

from .imgio import read_image
from .kernels import FilterBank, highpass, make_moving_average, validate_image
from .losses import PerceptualExtractor
from .models import to_tensor

__all__ = [
    "SSIM_PARAMS",
    "MetricReport",
    "psnr",
    "ssim",
    "perceptual_metric",
    "hf_std_statistic",
    "evaluate",
]

SSIM_PARAMS = {"window": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "peak": 1.0}

REPORT_HEADER = "fssr-report/1"


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = validate_image(a)
    b = validate_image(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    a, b = _check_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    g = np.arange(size, dtype=np.float64) - half
    w = np.exp(-(g[:, None] ** 2 + g[None, :] ** 2) / (2 * sigma**2))
    return w / w.sum()


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Single-scale structural similarity, per-channel maps averaged."""
    a, b = _check_pair(a, b)
    size = SSIM_PARAMS["window"]
    if min(a.shape[0], a.shape[1]) < size:
        raise ValueError(f"image {a.shape[:2]} smaller than the {size}px SSIM window")
    win = _gaussian_window(size, SSIM_PARAMS["sigma"])
    c1 = (SSIM_PARAMS["k1"] * SSIM_PARAMS["peak"]) ** 2
    c2 = (SSIM_PARAMS["k2"] * SSIM_PARAMS["peak"]) ** 2

    def smooth(x):
        return ndimage.correlate(x, win, mode="mirror")

    total = 0.0
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        mu_x, mu_y = smooth(x), smooth(y)
        var_x = smooth(x * x) - mu_x**2
        var_y = smooth(y * y) - mu_y**2
        cov = smooth(x * y) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        total += float(np.mean(num / den))
    return total / a.shape[2]


def perceptual_metric(a: np.ndarray, b: np.ndarray, ex: PerceptualExtractor) -> float:
    """Feature-space distance; shares the extractor used by the losses."""
    a, b = _check_pair(a, b)
    with torch.no_grad():
        return float(ex.distance(to_tensor(a), to_tensor(b)))


def hf_std_statistic(img: np.ndarray, fb: FilterBank, margin: int) -> float:
    """Standard deviation of the high band over the margin-cropped interior.

    Channel-pooled. The margin must cover at least the kernel radius and
    leave a non-empty interior.
    """
    arr = validate_image(img)
    if margin < fb.radius:
        raise ValueError(f"margin {margin} below kernel radius {fb.radius}")
    if 2 * margin >= min(arr.shape[0], arr.shape[1]):
        raise ValueError(f"margin {margin} leaves no interior in {arr.shape[:2]}")
    hp = highpass(arr, fb)
    interior = hp[margin:-margin, margin:-margin, :]
    return float(interior.std())


def _image_names(directory) -> list[str]:
    exts = (".png", ".jpg", ".jpeg")
    return sorted(f for f in os.listdir(directory) if f.lower().endswith(exts))


@dataclass
class MetricReport:
    """Per-image metrics plus corpus means, serializable as versioned text."""

    meta: dict
    per_image: list[dict] = field(default_factory=list)

    MEAN_KEYS = ("psnr", "ssim", "perceptual", "hf_std", "hf_std_ref")

    @property
    def means(self) -> dict:
        out = {}
        for key in self.MEAN_KEYS:
            values = [rec[key] for rec in self.per_image if key in rec]
            if values:
                out[key] = math.inf if any(math.isinf(v) for v in values) else float(np.mean(values))
        return out

    @staticmethod
    def _encode(value):
        if isinstance(value, float) and math.isinf(value):
            return "inf"
        return value

    @staticmethod
    def _decode(value):
        if value == "inf":
            return math.inf
        return value

    def to_text(self) -> str:
        lines = [REPORT_HEADER, json.dumps({"kind": "meta", **self.meta}, sort_keys=True)]
        for rec in self.per_image:
            enc = {k: self._encode(v) for k, v in rec.items()}
            lines.append(json.dumps({"kind": "image", **enc}, sort_keys=True))
        enc_means = {k: self._encode(v) for k, v in self.means.items()}
        lines.append(json.dumps({"kind": "means", **enc_means}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MetricReport":
        lines = text.strip().split("\n")
        if not lines or lines[0] != REPORT_HEADER:
            raise ValueError(f"not a metric report (expected {REPORT_HEADER!r} header)")
        meta = None
        per_image = []
        for line in lines[1:]:
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "meta":
                meta = rec
            elif kind == "image":
                per_image.append({k: cls._decode(v) for k, v in rec.items()})
        if meta is None:
            raise ValueError("metric report is missing its meta record")
        return cls(meta=meta, per_image=per_image)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path) -> "MetricReport":
        with open(path) as f:
            return cls.from_text(f.read())

    def render_table(self) -> str:
        up, down = "\u2191", "\u2193"
        header = f"{'image':<24} {'PSNR' + up:>10} {'SSIM' + up:>8} {'perceptual' + down:>14}"
        rows = [header, "-" * len(header)]
        for rec in self.per_image:
            p = "inf" if math.isinf(rec["psnr"]) else f"{rec['psnr']:.2f}"
            rows.append(
                f"{rec['name']:<24} {p:>10} {rec['ssim']:>8.4f} {rec['perceptual']:>14.6f}"
            )
        m = self.means
        p = "inf" if math.isinf(m["psnr"]) else f"{m['psnr']:.2f}"
        rows.append("-" * len(header))
        rows.append(f"{'mean':<24} {p:>10} {m['ssim']:>8.4f} {m['perceptual']:>14.6f}")
        return "\n".join(rows)


def evaluate(
    sr_dir,
    gt_dir,
    ex: PerceptualExtractor,
    hf_kernel: int = 5,
    hf_margin: int = 8,
    meta: dict | None = None,
    jobs: int = 1,
) -> MetricReport:
    """Score a directory of SR outputs against matching reference images.

    Files are matched by name; a missing or extra file on either side is an
    error. The high-frequency statistic is reported for both sides.
    """
    sr_names = _image_names(sr_dir)
    gt_names = _image_names(gt_dir)
    if not sr_names:
        raise ValueError(f"no images found in {sr_dir}")
    if sr_names != gt_names:
        raise ValueError(f"file sets differ between {sr_dir} and {gt_dir}")
    fb = make_moving_average(hf_kernel)

    def score(name: str) -> dict:
        sr = read_image(os.path.join(sr_dir, name))
        gt = read_image(os.path.join(gt_dir, name))
        return {
            "name": name,
            "psnr": psnr(sr, gt),
            "ssim": ssim(sr, gt),
            "perceptual": perceptual_metric(sr, gt, ex),
            "hf_std": hf_std_statistic(sr, fb, hf_margin),
            "hf_std_ref": hf_std_statistic(gt, fb, hf_margin),
        }

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            per_image = list(pool.map(score, sr_names))
    else:
        per_image = [score(n) for n in sr_names]

    report_meta = {
        "sr_dir": str(sr_dir),
        "gt_dir": str(gt_dir),
        "ssim_params": SSIM_PARAMS,
        "hf_kernel": hf_kernel,
        "hf_margin": hf_margin,
        "extractor": ex.config(),
    }
    if meta:
        report_meta.update(meta)
    return MetricReport(meta=report_meta, per_image=per_image)
