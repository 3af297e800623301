"""Dataset construction and paired patch loading with persistent manifests.

Four builders cover the training-data variants: plain bicubic pairs, the
two translated-domain variants (HR in the source domain, or HR cleaned by
x2 downscaling) whose LR images come from a trained downsampler generator,
and oracle ground-truth pairs produced by degrading both scales of a clean
image.

Every dataset directory holds ``hr/``, ``lr/`` and a line-delimited
``manifest.txt`` with a versioned header. LR images of generator
provenance are re-verifiable: the builder derives them from the quantized
stored HR files, so re-running the recorded checkpoint reproduces the
stored LR up to 16-bit quantization.
"""

from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import torch

from .checkpoint import checkpoint_hash
from .degrade import JPEG_ENCODER_SETTINGS, DegradationSpec, make_gt_pair
from .imgio import read_image, write_png16
from .models import to_images, to_tensor
from .resample import ResampleSpec, bicubic_resize
from .training import generator_from_checkpoint

__all__ = [
    "MANIFEST_HEADER",
    "DomainTag",
    "PairRecord",
    "DatasetManifest",
    "build_bicubic_dataset",
    "build_sdsr_dataset",
    "build_tdsr_dataset",
    "build_gt_dataset",
    "load_batch",
    "verify_generated_pairs",
]

MANIFEST_HEADER = "fssr-manifest/1"
PAIR_SCALE = 4
QUANT16_STEP = 1.0 / 65535.0


class DomainTag(str, Enum):
    X_BICUBIC = "X_bicubic"
    Y_HR = "Y_hr"
    Z_SOURCE = "Z_source"


@dataclass(frozen=True)
class PairRecord:
    hr_path: str
    lr_path: str
    provenance: str  # bicubic | dsgan | gt_degraded
    seed: int | None = None
    degradation: dict | None = None

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "PairRecord":
        return cls(**json.loads(line))


@dataclass
class DatasetManifest:
    """Versioned, human-diffable record of one dataset directory."""

    stage: str  # sdsr | tdsr | bicubic | gt
    domains: dict
    records: list[PairRecord] = field(default_factory=list)
    generator_checkpoint_hash: str | None = None
    encoder_settings: dict | None = None
    root: str | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def to_text(self) -> str:
        header = {
            "kind": "header",
            "stage": self.stage,
            "domains": self.domains,
            "generator_checkpoint_hash": self.generator_checkpoint_hash,
            "encoder_settings": self.encoder_settings,
        }
        lines = [MANIFEST_HEADER, json.dumps(header, sort_keys=True)]
        lines += [rec.to_json_line() for rec in self.records]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, root: str | None = None) -> "DatasetManifest":
        lines = text.strip().split("\n")
        if not lines or lines[0] != MANIFEST_HEADER:
            raise ValueError(f"not a dataset manifest (expected {MANIFEST_HEADER!r})")
        header = json.loads(lines[1])
        if header.get("kind") != "header":
            raise ValueError("manifest header record missing")
        records = [PairRecord.from_json_line(line) for line in lines[2:]]
        return cls(
            stage=header["stage"],
            domains=header["domains"],
            records=records,
            generator_checkpoint_hash=header.get("generator_checkpoint_hash"),
            encoder_settings=header.get("encoder_settings"),
            root=root,
        )

    def save(self, out_dir) -> str:
        path = os.path.join(out_dir, "manifest.txt")
        with open(path, "w") as f:
            f.write(self.to_text())
        self.root = str(out_dir)
        return path

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path) as f:
            text = f.read()
        return cls.from_text(text, root=os.path.dirname(os.path.abspath(path)))

    def _resolve(self, rel: str) -> str:
        if self.root is None:
            raise ValueError("manifest has no root directory; load it from disk first")
        return os.path.join(self.root, rel)

    def read_pair(self, index: int):
        if index not in self._cache:
            rec = self.records[index]
            self._cache[index] = (
                read_image(self._resolve(rec.hr_path)),
                read_image(self._resolve(rec.lr_path)),
            )
        return self._cache[index]

    def verify(self) -> None:
        """Check that every referenced file exists, decodes, and pairs up."""
        for rec in self.records:
            hr, lr = (
                read_image(self._resolve(rec.hr_path)),
                read_image(self._resolve(rec.lr_path)),
            )
            if (
                hr.shape[0] != PAIR_SCALE * lr.shape[0]
                or hr.shape[1] != PAIR_SCALE * lr.shape[1]
            ):
                raise ValueError(
                    f"pair {rec.hr_path}/{rec.lr_path} violates the "
                    f"{PAIR_SCALE}x dimension contract: {hr.shape} vs {lr.shape}"
                )


def _quantize16(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 65535.0) / 65535.0


def _translate_lr(gen: torch.nn.Module, lr_input: np.ndarray) -> np.ndarray:
    """Run the downsampler generator on a full LR image, clamped to [0, 1]."""
    gen.eval()
    with torch.no_grad():
        out = gen(to_tensor(lr_input[None]))
    return np.clip(to_images(out)[0], 0.0, 1.0)


def _write_pairs(out_dir, pair_fn, n: int, jobs: int):
    """Compute (hr, lr, extras) per index, write 16-bit PNGs, return records."""
    hr_dir = os.path.join(out_dir, "hr")
    lr_dir = os.path.join(out_dir, "lr")
    os.makedirs(hr_dir, exist_ok=True)
    os.makedirs(lr_dir, exist_ok=True)

    def work(i: int) -> PairRecord:
        hr, lr, extras = pair_fn(i)
        name = f"{i:06d}.png"
        write_png16(os.path.join(hr_dir, name), hr)
        write_png16(os.path.join(lr_dir, name), lr)
        return PairRecord(hr_path=f"hr/{name}", lr_path=f"lr/{name}", **extras)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, range(n)))
    return [work(i) for i in range(n)]


def _load_dsgan_generator(checkpoint_path):
    gen, config = generator_from_checkpoint(checkpoint_path)
    if config.stage != "dsgan":
        raise ValueError(
            f"checkpoint {checkpoint_path} holds a {config.stage!r} generator, "
            "expected the downsampling stage"
        )
    return gen, checkpoint_hash(checkpoint_path)


def build_bicubic_dataset(hr_images, out_dir, jobs: int = 1) -> DatasetManifest:
    """Baseline pairs: LR is plain bicubic x4 downscaling of the HR image."""
    spec = ResampleSpec(factor=float(PAIR_SCALE))

    def pair(i):
        hr = _quantize16(hr_images[i])
        return hr, bicubic_resize(hr, spec), {"provenance": "bicubic"}

    records = _write_pairs(out_dir, pair, len(hr_images), jobs)
    manifest = DatasetManifest(
        stage="bicubic",
        domains={"hr": DomainTag.Y_HR.value, "lr": DomainTag.X_BICUBIC.value},
        records=records,
    )
    manifest.save(out_dir)
    return manifest


def build_sdsr_dataset(source_images, dsgan_checkpoint, out_dir, jobs: int = 1) -> DatasetManifest:
    """Source-domain pairs: HR is the source image itself, LR is the
    generator's translation of its bicubic downscale."""
    gen, ckpt_hash = _load_dsgan_generator(dsgan_checkpoint)
    spec = ResampleSpec(factor=float(PAIR_SCALE))

    def pair(i):
        hr = _quantize16(source_images[i])
        lr = _translate_lr(gen, bicubic_resize(hr, spec))
        return hr, lr, {"provenance": "dsgan"}

    records = _write_pairs(out_dir, pair, len(source_images), jobs)
    manifest = DatasetManifest(
        stage="sdsr",
        domains={"hr": DomainTag.Z_SOURCE.value, "lr": DomainTag.Z_SOURCE.value},
        records=records,
        generator_checkpoint_hash=ckpt_hash,
    )
    manifest.save(out_dir)
    return manifest


def build_tdsr_dataset(source_images, dsgan_checkpoint, out_dir, jobs: int = 1) -> DatasetManifest:
    """Clean-domain pairs: HR is the x2 downscale of the source image (which
    strips most corruption), LR again comes from the generator."""
    gen, ckpt_hash = _load_dsgan_generator(dsgan_checkpoint)
    spec2 = ResampleSpec(factor=2.0)
    spec4 = ResampleSpec(factor=float(PAIR_SCALE))

    def pair(i):
        hr = _quantize16(bicubic_resize(source_images[i], spec2))
        lr = _translate_lr(gen, bicubic_resize(hr, spec4))
        return hr, lr, {"provenance": "dsgan"}

    records = _write_pairs(out_dir, pair, len(source_images), jobs)
    manifest = DatasetManifest(
        stage="tdsr",
        domains={"hr": DomainTag.Y_HR.value, "lr": DomainTag.Z_SOURCE.value},
        records=records,
        generator_checkpoint_hash=ckpt_hash,
    )
    manifest.save(out_dir)
    return manifest


def build_gt_dataset(
    clean_images, spec: DegradationSpec, out_dir, jobs: int = 1
) -> DatasetManifest:
    """Oracle pairs: the same degradation process applied at both scales."""

    def pair(i):
        per_image = dataclasses.replace(spec, seed=spec.seed + 2 * i)
        hr, lr = make_gt_pair(clean_images[i], per_image, factor=float(PAIR_SCALE))
        return (
            _quantize16(hr),
            _quantize16(lr),
            {
                "provenance": "gt_degraded",
                "seed": per_image.seed,
                "degradation": per_image.to_dict(),
            },
        )

    records = _write_pairs(out_dir, pair, len(clean_images), jobs)
    manifest = DatasetManifest(
        stage="gt",
        domains={"hr": DomainTag.Z_SOURCE.value, "lr": DomainTag.Z_SOURCE.value},
        records=records,
        encoder_settings=JPEG_ENCODER_SETTINGS if spec.kind == "jpeg" else None,
    )
    manifest.save(out_dir)
    return manifest


def load_batch(
    manifest: DatasetManifest,
    indices,
    patch_size: int,
    augment: bool,
    seed: int,
):
    """Aligned HR/LR patch batch: LR patch (p, p) at (i, j) pairs with the
    HR patch (4p, 4p) at (4i, 4j). Augmentations (flips, 90-degree
    rotations) hit both sides identically. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    hrs, lrs = [], []
    for index in indices:
        hr, lr = manifest.read_pair(index)
        lh, lw = lr.shape[:2]
        if patch_size > lh or patch_size > lw:
            raise ValueError(f"patch {patch_size} exceeds LR image {lr.shape[:2]}")
        i = int(rng.integers(0, lh - patch_size + 1))
        j = int(rng.integers(0, lw - patch_size + 1))
        lr_patch = lr[i : i + patch_size, j : j + patch_size]
        hr_patch = hr[
            PAIR_SCALE * i : PAIR_SCALE * (i + patch_size),
            PAIR_SCALE * j : PAIR_SCALE * (j + patch_size),
        ]
        if augment:
            k = int(rng.integers(0, 4))
            flip = bool(rng.integers(0, 2))
            lr_patch = np.rot90(lr_patch, k, axes=(0, 1))
            hr_patch = np.rot90(hr_patch, k, axes=(0, 1))
            if flip:
                lr_patch = lr_patch[:, ::-1]
                hr_patch = hr_patch[:, ::-1]
        lrs.append(np.ascontiguousarray(lr_patch))
        hrs.append(np.ascontiguousarray(hr_patch))
    return np.stack(hrs), np.stack(lrs)


def verify_generated_pairs(manifest: DatasetManifest, checkpoint_path) -> float:
    """Re-run the recorded generator over every generator-provenance pair.

    Returns the largest deviation between the recomputed LR and the stored
    (16-bit quantized) LR; raises if the checkpoint hash does not match or
    any deviation exceeds quantization plus float tolerance.
    """
    actual_hash = checkpoint_hash(checkpoint_path)
    if actual_hash != manifest.generator_checkpoint_hash:
        raise ValueError(
            f"checkpoint hash mismatch: manifest records "
            f"{manifest.generator_checkpoint_hash}, file has {actual_hash}"
        )
    gen, _ = _load_dsgan_generator(checkpoint_path)
    spec = ResampleSpec(factor=float(PAIR_SCALE))
    tolerance = 0.5 * QUANT16_STEP + 1e-6
    worst = 0.0
    for index, rec in enumerate(manifest.records):
        if rec.provenance != "dsgan":
            continue
        hr, lr_stored = manifest.read_pair(index)
        lr_again = _translate_lr(gen, bicubic_resize(hr, spec))
        deviation = float(np.abs(lr_again - lr_stored).max())
        worst = max(worst, deviation)
        if deviation > tolerance:
            raise ValueError(
                f"pair {rec.lr_path} does not reproduce: deviation {deviation:.3e}"
            )
    return worst
