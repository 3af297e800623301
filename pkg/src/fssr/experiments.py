"""Desk-scale experiment orchestration.

Builds small synthetic corpora, runs every (training dataset, SR wiring)
combination of a plan with shared seeds, evaluates against ground-truth
conventions (corrupted references for source-domain SR, clean references
for target-domain SR), and emits a comparison report plus side-by-side
crop mosaics. Every number in a report is regenerable from the recorded
seeds and configuration echoes.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .datasets import (
    DatasetManifest,
    build_bicubic_dataset,
    build_gt_dataset,
    build_sdsr_dataset,
    build_tdsr_dataset,
)
from .degrade import DegradationSpec, apply_degradation, make_gt_pair
from .imgio import write_png8
from .kernels import make_moving_average
from .losses import PerceptualExtractor
from .metrics import hf_std_statistic, perceptual_metric, psnr, ssim
from .models import to_images, to_tensor
from .resample import ResampleSpec, bicubic_resize
from .training import DsganData, TrainConfig, generator_from_checkpoint, run_training

__all__ = [
    "ExperimentPlan",
    "AblationReport",
    "make_toy_corpus",
    "corruption_spec",
    "degrade_images",
    "run_sr_on_images",
    "run_ablation",
    "noise_preservation_check",
    "save_crop_mosaic",
]

REPORT_HEADER = "fssr-ablation/1"
CORRUPTIONS = ("noise8", "jpeg30")
SETTINGS = ("sdsr", "tdsr")
DATASET_VARIANTS = ("bicubic", "dsgan", "gt")
SR_VARIANTS = ("plain", "frequency_separated")
# canonical quality order on the perceptual axis, best first
VARIANT_ORDER = ("gt", "dsgan", "bicubic")


def make_toy_corpus(n: int, size: int, seed: int) -> list[np.ndarray]:
    """Clean procedural images: smooth fields, soft blobs, a few edges.

    Content is deliberately low in high-frequency energy so that injected
    corruptions dominate the high band.
    """
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    images = []
    for _ in range(n):
        yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size), indexing="ij")
        img = np.zeros((size, size, 3))
        for c in range(3):
            a, b = rng.uniform(-0.25, 0.25, 2)
            img[:, :, c] = 0.5 + a * (yy - 0.5) + b * (xx - 0.5)
        img += 0.9 * gaussian_filter(rng.standard_normal((size, size, 3)), (size / 16, size / 16, 0))
        for _ in range(rng.integers(2, 5)):
            cy, cx = rng.uniform(0.15, 0.85, 2)
            r = rng.uniform(0.05, 0.2)
            blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * r * r)))
            img += rng.uniform(-0.3, 0.3) * blob[:, :, None] * rng.uniform(0.3, 1.0, 3)
        for _ in range(rng.integers(1, 3)):
            y0, x0 = rng.integers(0, size - 20, 2)
            h, w = rng.integers(10, size // 4, 2)
            img[y0 : y0 + h, x0 : x0 + w] += rng.uniform(-0.2, 0.2, 3)
        images.append(np.clip(img, 0.05, 0.95))
    return images


def corruption_spec(corruption: str, seed: int) -> DegradationSpec:
    if corruption == "noise8":
        return DegradationSpec(kind="gaussian_noise", sigma=8.0, seed=seed)
    if corruption == "jpeg30":
        return DegradationSpec(kind="jpeg", quality=30, seed=seed)
    raise ValueError(f"unknown corruption {corruption!r}")


def degrade_images(images, spec: DegradationSpec) -> list[np.ndarray]:
    """Apply one corruption process with per-image seed offsets."""
    return [apply_degradation(img, spec, seed=spec.seed + i) for i, img in enumerate(images)]


def run_sr_on_images(checkpoint_path, images) -> list[np.ndarray]:
    """x4 inference on full images with a trained SR checkpoint."""
    gen, config = generator_from_checkpoint(checkpoint_path)
    if config.stage != "sr":
        raise ValueError(f"checkpoint {checkpoint_path} is not an SR-stage model")
    outs = []
    with torch.no_grad():
        for img in images:
            outs.append(np.clip(to_images(gen(to_tensor(img[None])))[0], 0.0, 1.0))
    return outs


@dataclass(frozen=True)
class ExperimentPlan:
    """One comparison grid: corruption x setting x variants x seeds.

    `dsgan_config` and `sr_config` override fields of the stage training
    configurations (iterations, batch size, model sizes, ...).
    """

    corruption: str = "noise8"
    setting: str = "sdsr"
    dataset_variants: tuple[str, ...] = ("bicubic", "dsgan")
    sr_variants: tuple[str, ...] = ("frequency_separated",)
    seeds: tuple[int, ...] = (0, 1, 2)
    corpus_images: int = 32
    corpus_size: int = 256
    val_images: int = 8
    dsgan_config: dict = field(default_factory=dict)
    sr_config: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.corruption not in CORRUPTIONS:
            raise ValueError(f"unknown corruption {self.corruption!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        for v in self.dataset_variants:
            if v not in DATASET_VARIANTS:
                raise ValueError(f"unknown dataset variant {v!r}")
        for v in self.sr_variants:
            if v not in SR_VARIANTS:
                raise ValueError(f"unknown SR variant {v!r}")
        if "gt" in self.dataset_variants and self.setting != "sdsr":
            raise ValueError("the gt dataset variant is only wired for the sdsr setting")
        if not self.dataset_variants or not self.sr_variants:
            raise ValueError("need at least one dataset variant and one SR variant")
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")

    def dsgan_train_config(self, seed: int) -> TrainConfig:
        base = dict(iterations=800, seed=seed)
        base.update(self.dsgan_config)
        base["seed"] = seed
        return TrainConfig.dsgan_defaults(**base)

    def sr_train_config(self, seed: int, frequency_separated: bool) -> TrainConfig:
        base = dict(iterations=500, warmup_pixel_iters=150, batch_size=8, seed=seed)
        base.update(self.sr_config)
        base["seed"] = seed
        base["frequency_separated"] = frequency_separated
        return TrainConfig.sr_defaults(**base)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("dataset_variants", "sr_variants", "seeds"):
            d[key] = list(d[key])
        return d


@dataclass
class AblationReport:
    """Rows of per-seed metrics with medians and ordering claims."""

    plan: dict
    rows: list[dict] = field(default_factory=list)
    claims: list[dict] = field(default_factory=list)

    def rows_for(self, dataset: str, sr: str) -> list[dict]:
        return [r for r in self.rows if r["dataset"] == dataset and r["sr"] == sr]

    def median(self, dataset: str, sr: str, metric: str) -> float:
        values = [r[metric] for r in self.rows_for(dataset, sr)]
        if not values:
            raise KeyError(f"no rows for ({dataset}, {sr})")
        return float(np.median(values))

    def to_text(self) -> str:
        lines = [REPORT_HEADER, json.dumps({"kind": "plan", **self.plan}, sort_keys=True)]
        lines += [json.dumps({"kind": "row", **r}, sort_keys=True) for r in self.rows]
        lines += [json.dumps({"kind": "claim", **c}, sort_keys=True) for c in self.claims]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "AblationReport":
        lines = text.strip().split("\n")
        if not lines or lines[0] != REPORT_HEADER:
            raise ValueError(f"not an ablation report (expected {REPORT_HEADER!r})")
        plan, rows, claims = None, [], []
        for line in lines[1:]:
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "plan":
                plan = rec
            elif kind == "row":
                rows.append(rec)
            elif kind == "claim":
                claims.append(rec)
        if plan is None:
            raise ValueError("ablation report is missing its plan record")
        return cls(plan=plan, rows=rows, claims=claims)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path) -> "AblationReport":
        with open(path) as f:
            return cls.from_text(f.read())


def _train_dsgan(source_images, config: TrainConfig, out_dir) -> str:
    run_training(config, DsganData(hr_images=source_images, source_images=source_images), out_dir)
    return os.path.join(out_dir, "checkpoint_final.npz")


def _build_variant_dataset(variant, plan, source_images, clean_images, dsgan_ckpt, spec, out_dir):
    if variant == "dsgan":
        if plan.setting == "sdsr":
            return build_sdsr_dataset(source_images, dsgan_ckpt, out_dir)
        return build_tdsr_dataset(source_images, dsgan_ckpt, out_dir)
    if variant == "bicubic":
        if plan.setting == "sdsr":
            hr_set = source_images
        else:
            spec2 = ResampleSpec(factor=2.0)
            hr_set = [bicubic_resize(img, spec2) for img in source_images]
        return build_bicubic_dataset(hr_set, out_dir)
    return build_gt_dataset(clean_images, spec, out_dir)


def _train_sr(manifest: DatasetManifest, plan, sr_variant: str, seed: int, out_dir) -> str:
    config = plan.sr_train_config(seed, sr_variant == "frequency_separated")
    run_training(config, manifest, out_dir)
    return os.path.join(out_dir, "checkpoint_final.npz")


def save_crop_mosaic(panels: list[np.ndarray], path, crop: int = 96, pad: int = 4) -> None:
    """Write a horizontal strip of center crops as one 8-bit PNG."""
    tiles = []
    for img in panels:
        h, w = img.shape[:2]
        c = min(crop, h, w)
        top, left = (h - c) // 2, (w - c) // 2
        tiles.append(img[top : top + c, left : left + c])
    size = min(t.shape[0] for t in tiles)
    tiles = [t[:size, :size] for t in tiles]
    sep = np.ones((size, pad, 3))
    row = tiles[0]
    for t in tiles[1:]:
        row = np.concatenate([row, sep, t], axis=1)
    write_png8(path, row)


def run_ablation(plan: ExperimentPlan, out_dir) -> AblationReport:
    """Train every (dataset, SR wiring) combination of the plan and score it.

    Each seed gets its own corpus draw and corruption seeds; the same
    trained downsampler is shared by all variants of that seed. Results are
    written to ``report.txt`` next to per-combination crop mosaics.
    """
    os.makedirs(out_dir, exist_ok=True)
    fb = make_moving_average(5)
    report = AblationReport(plan=plan.to_dict())

    for seed in plan.seeds:
        seed_dir = os.path.join(out_dir, f"seed{seed}")
        clean_train = make_toy_corpus(plan.corpus_images, plan.corpus_size, seed * 1000 + 1)
        clean_val = make_toy_corpus(plan.val_images, plan.corpus_size, seed * 1000 + 2)
        spec = corruption_spec(plan.corruption, seed * 1000 + 3)
        source_train = degrade_images(clean_train, spec)

        val_refs_corrupted, val_lr = [], []
        for i, img in enumerate(clean_val):
            hr_c, lr_c = make_gt_pair(
                img, dataclasses.replace(spec, seed=seed * 1000 + 500 + 2 * i), factor=4.0
            )
            val_refs_corrupted.append(hr_c)
            val_lr.append(lr_c)
        val_refs = val_refs_corrupted if plan.setting == "sdsr" else clean_val
        source_stat = float(np.mean([hf_std_statistic(im, fb, 8) for im in source_train]))

        dsgan_ckpt = None
        if "dsgan" in plan.dataset_variants:
            dsgan_ckpt = _train_dsgan(
                source_train, plan.dsgan_train_config(seed), os.path.join(seed_dir, "dsgan")
            )

        ex = PerceptualExtractor(seed=777)
        for variant in plan.dataset_variants:
            manifest = _build_variant_dataset(
                variant, plan, source_train, clean_train, dsgan_ckpt, spec,
                os.path.join(seed_dir, f"data_{variant}"),
            )
            for sr_variant in plan.sr_variants:
                run_dir = os.path.join(seed_dir, f"sr_{variant}_{sr_variant}")
                ckpt = _train_sr(manifest, plan, sr_variant, seed, run_dir)
                outputs = run_sr_on_images(ckpt, val_lr)
                row = {
                    "dataset": variant,
                    "sr": sr_variant,
                    "seed": seed,
                    "psnr": float(np.mean([psnr(o, r) for o, r in zip(outputs, val_refs)])),
                    "ssim": float(np.mean([ssim(o, r) for o, r in zip(outputs, val_refs)])),
                    "perceptual": float(
                        np.mean([perceptual_metric(o, r, ex) for o, r in zip(outputs, val_refs)])
                    ),
                    "hf_std": float(np.mean([hf_std_statistic(o, fb, 8) for o in outputs])),
                    "source_stat": source_stat,
                }
                report.rows.append(row)
                save_crop_mosaic(
                    [val_refs[0], outputs[0]],
                    os.path.join(out_dir, f"mosaic_seed{seed}_{variant}_{sr_variant}.png"),
                )

    _append_ordering_claims(report, plan)
    report.save(os.path.join(out_dir, "report.txt"))
    return report


def _append_ordering_claims(report: AblationReport, plan: ExperimentPlan) -> None:
    """Pairwise perceptual-distance ordering along gt <= dsgan < bicubic."""
    present = [v for v in VARIANT_ORDER if v in plan.dataset_variants]
    if len(present) < 2:
        return
    for sr_variant in plan.sr_variants:
        for better, worse in zip(present, present[1:]):
            relation = "<=" if better == "gt" else "<"
            per_seed = []
            for seed in plan.seeds:
                a = [r for r in report.rows_for(better, sr_variant) if r["seed"] == seed]
                b = [r for r in report.rows_for(worse, sr_variant) if r["seed"] == seed]
                if a and b:
                    lhs, rhs = a[0]["perceptual"], b[0]["perceptual"]
                    per_seed.append(lhs <= rhs if relation == "<=" else lhs < rhs)
            med_a = report.median(better, sr_variant, "perceptual")
            med_b = report.median(worse, sr_variant, "perceptual")
            report.claims.append(
                {
                    "metric": "perceptual",
                    "sr": sr_variant,
                    "better": better,
                    "worse": worse,
                    "relation": relation,
                    "per_seed": per_seed,
                    "median_holds": med_a <= med_b if relation == "<=" else med_a < med_b,
                }
            )


def noise_preservation_check(sr_outputs, source_stat: float, band=(0.65, 1.35)) -> dict:
    """Is the high-band energy of SR outputs inside a band around the source?

    Returns the measured statistic, its ratio to the source statistic, the
    band, and pass/fail.
    """
    fb = make_moving_average(5)
    stat = float(np.mean([hf_std_statistic(o, fb, 8) for o in sr_outputs]))
    ratio = stat / source_stat
    return {
        "stat": stat,
        "source_stat": source_stat,
        "ratio": ratio,
        "band": tuple(band),
        "inside": bool(band[0] <= ratio <= band[1]),
    }
