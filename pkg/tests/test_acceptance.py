"""Acceptance gate for the build.

Each criterion runs at its stated tolerance and prints one PASS line on
success (run with ``-s`` to see them); a failed assert is the FAIL.

The training-based criteria (A3-A6) share one artifact bundle: three
seeded downsampler trainings, the derived datasets, and the SR models
trained on them. Building it takes upward of an hour on a small CPU. Set
``FSSR_ACCEPTANCE_CACHE=<dir>`` to reuse trained artifacts across runs
while iterating; with a cold cache everything is trained from scratch.
"""

import dataclasses
import hashlib
import json
import math
import os
import time

import numpy as np
import pytest
import torch

from fssr.datasets import (
    DatasetManifest,
    build_bicubic_dataset,
    build_gt_dataset,
    build_sdsr_dataset,
    build_tdsr_dataset,
)
from fssr.degrade import make_gt_pair
from fssr.experiments import (
    corruption_spec,
    degrade_images,
    make_toy_corpus,
    run_sr_on_images,
)
from fssr.imgio import write_png16
from fssr.kernels import (
    decompose,
    highpass,
    lowpass,
    make_moving_average,
)
from fssr.losses import (
    LossWeights,
    PerceptualExtractor,
    adversarial_disc_loss,
    adversarial_gen_loss,
    color_loss,
    dsgan_generator_loss,
    sr_generator_loss,
    tensor_highpass,
)
from fssr.metrics import MetricReport, evaluate, hf_std_statistic, perceptual_metric, psnr, ssim
from fssr.models import (
    DiscriminatorSpec,
    GeneratorSpec,
    SRGeneratorSpec,
    build_dsgan_generator,
    build_patch_discriminator,
    build_sr_generator,
)
from fssr.resample import ResampleSpec, bicubic_resize
from fssr.training import DsganData, TrainConfig, run_training

from .oracles import (
    condition_network_for_gradcheck,
    finite_difference_gradcheck,
    scalar_bicubic_resize,
    scalar_psnr,
    scalar_ssim,
)

SEEDS = (0, 1, 2)
CORPUS_IMAGES = 32
CORPUS_SIZE = 256
VAL_IMAGES = 8
DSGAN_ITERATIONS = 800  # <= 5k ceiling
SR_ITERATIONS = 500
SR_WARMUP = 150
FB5 = make_moving_average(5)
HF_MARGIN = 8


def report(name: str, detail: str) -> None:
    print(f"\n{name}: PASS ({detail})")


def corpus_stat(images) -> float:
    return float(np.mean([hf_std_statistic(im, FB5, HF_MARGIN) for im in images]))


# ---------------------------------------------------------------------------
# A1 - frequency-separation identities
# ---------------------------------------------------------------------------


class TestA1FrequencySeparation:
    def test_a1(self):
        start = time.time()
        rng = np.random.default_rng(0)
        recon_worst = dc_worst = 0.0
        for i in range(100):
            k = (5, 9)[i % 2]
            fb = make_moving_average(k)
            img = rng.random((28, 24, 3))
            pair = decompose(img, fb)
            recon_worst = max(recon_worst, float(np.abs(pair.low + pair.high - img).max()))
            const = np.full((20, 20, 3), rng.random())
            dc_worst = max(dc_worst, float(np.abs(highpass(const, fb)).max()))
        assert recon_worst < 1e-6
        assert dc_worst < 1e-9

        # color-loss gradient against a pure high-frequency perturbation
        def null_pattern(n, k):
            u = np.cos(2 * np.pi * np.arange(n) / k)
            return torch.from_numpy(np.broadcast_to(np.outer(u, u), (1, 3, n, n)).copy()).double()

        grad_hf_worst = 0.0
        for k, n in ((5, 16), (9, 64)):
            fb = make_moving_average(k)
            p = null_pattern(n, k)
            assert float(np.abs(lowpass(np.moveaxis(p[0].numpy(), 0, -1), fb)).max()) < 1e-12
            gen = torch.Generator().manual_seed(3)
            ref = torch.rand(1, 3, n, n, dtype=torch.float64, generator=gen)
            fake = (torch.rand(1, 3, n, n, dtype=torch.float64, generator=gen) + 0.4).requires_grad_(True)
            color_loss(fake, ref, fb).backward()
            grad_hf_worst = max(grad_hf_worst, abs(float((fake.grad * p).sum())) / float(p.norm()))
        assert grad_hf_worst < 1e-6

        # adversarial gradient against a constant (DC) perturbation
        disc = build_patch_discriminator(DiscriminatorSpec(feature_plan=(8, 16, 16, 1)), seed=0).double()
        disc.eval()
        grad_dc_worst = 0.0
        for k, n in ((5, 16), (9, 32)):
            fb = make_moving_average(k)
            gen = torch.Generator().manual_seed(4)
            fake = torch.rand(2, 3, n, n, dtype=torch.float64, generator=gen).requires_grad_(True)
            adversarial_gen_loss(disc(tensor_highpass(fake, fb))).backward()
            dc = torch.ones_like(fake) / math.sqrt(fake.numel())
            grad_dc_worst = max(grad_dc_worst, abs(float((fake.grad * dc).sum())))
        assert grad_dc_worst < 1e-6

        elapsed = time.time() - start
        assert elapsed < 60
        report(
            "A1 frequency-separation identities",
            f"recon {recon_worst:.1e}, dc {dc_worst:.1e}, "
            f"grad-hf {grad_hf_worst:.1e}, grad-dc {grad_dc_worst:.1e}, {elapsed:.0f}s",
        )


# ---------------------------------------------------------------------------
# A2 - numerical correctness
# ---------------------------------------------------------------------------


class TestA2NumericalCorrectness:
    def test_a2(self):
        start = time.time()
        worst_net = 0.0
        micro = [
            (build_dsgan_generator, GeneratorSpec(num_residual_blocks=2, features=8), (2, 3, 8, 8)),
            (build_sr_generator, SRGeneratorSpec(num_blocks=2, features=8), (2, 3, 6, 6)),
            (build_patch_discriminator, DiscriminatorSpec(feature_plan=(8, 16, 16, 1)), (2, 3, 9, 9)),
        ]
        for builder, spec, shape in micro:
            net = builder(spec, seed=5).double()
            condition_network_for_gradcheck(net)
            x = torch.rand(*shape, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
            worst_net = max(
                worst_net,
                finite_difference_gradcheck(lambda: (net(x) ** 2).mean(), net.parameters()),
            )
        assert worst_net < 1e-4

        # loss wiring gradients: the combined generator objectives of both
        # stages with scores from a live discriminator on the high band
        worst_loss = 0.0
        for stage_fb, size, loss_fn_builder in (
            (make_moving_average(5), 16, "dsgan"),
            (make_moving_average(9), 32, "sr"),
        ):
            disc = build_patch_discriminator(
                DiscriminatorSpec(feature_plan=(8, 16, 16, 1)), seed=3
            ).double()
            condition_network_for_gradcheck(disc)
            disc.eval()
            ex = PerceptualExtractor(seed=1).double()
            gen_t = torch.Generator().manual_seed(9)
            ref = torch.rand(2, 3, size, size, dtype=torch.float64, generator=gen_t)
            fake = (ref + 0.4 + 0.1 * torch.rand(ref.shape, dtype=torch.float64, generator=gen_t))
            fake = fake.detach().requires_grad_(True)

            def total_loss():
                scores = disc(tensor_highpass(fake, stage_fb))
                if loss_fn_builder == "dsgan":
                    total, _ = dsgan_generator_loss(
                        fake, ref, scores, LossWeights.dsgan_defaults(), stage_fb, ex
                    )
                else:
                    total, _ = sr_generator_loss(
                        fake, ref, scores, LossWeights.sr_defaults(), stage_fb, ex
                    )
                return total

            worst_loss = max(worst_loss, finite_difference_gradcheck(total_loss, [fake]))

        real = (torch.rand(1, 1, 6, 6, dtype=torch.float64) - 0.5).requires_grad_(True)
        fake_s = (torch.rand(1, 1, 6, 6, dtype=torch.float64) - 0.5).requires_grad_(True)
        worst_loss = max(
            worst_loss,
            finite_difference_gradcheck(
                lambda: adversarial_disc_loss(real, fake_s), [real, fake_s]
            ),
        )
        assert worst_loss < 1e-4

        # scalar oracle equivalences
        rng = np.random.default_rng(7)
        worst_psnr = worst_ssim = 0.0
        for _ in range(100):
            a = rng.random((13, 12, 3))
            b = rng.random((13, 12, 3))
            worst_psnr = max(worst_psnr, abs(psnr(a, b) - scalar_psnr(a, b)))
        assert worst_psnr < 1e-9
        for _ in range(4):
            a = rng.random((12, 13, 3))
            b = rng.random((12, 13, 3))
            worst_ssim = max(worst_ssim, abs(ssim(a, b) - scalar_ssim(a, b)))
        assert worst_ssim < 1e-6

        worst_resize = 0.0
        for factor, antialias in ((4.0, True), (2.0, True), (4.0, False)):
            img = rng.random((16, 16, 3))
            ours = bicubic_resize(img, ResampleSpec(factor=factor, antialias=antialias))
            ref = scalar_bicubic_resize(img, factor, antialias)
            worst_resize = max(worst_resize, float(np.abs(ours - ref).max()))
        assert worst_resize < 1e-9

        elapsed = time.time() - start
        assert elapsed < 600
        report(
            "A2 numerical correctness",
            f"net-grad {worst_net:.1e}, loss-grad {worst_loss:.1e}, psnr {worst_psnr:.1e} dB, "
            f"ssim {worst_ssim:.1e}, resize {worst_resize:.1e}, {elapsed:.0f}s",
        )


# ---------------------------------------------------------------------------
# shared artifacts for A3-A6
# ---------------------------------------------------------------------------


def _fingerprint() -> str:
    payload = {
        "seeds": SEEDS,
        "corpus": [CORPUS_IMAGES, CORPUS_SIZE, VAL_IMAGES],
        "dsgan": TrainConfig.dsgan_defaults(iterations=DSGAN_ITERATIONS).to_dict(),
        "sr": TrainConfig.sr_defaults(
            iterations=SR_ITERATIONS, warmup_pixel_iters=SR_WARMUP, batch_size=8
        ).to_dict(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _seed_bundle(seed: int, root: str) -> dict:
    """Train (or reuse) everything derived from one seed."""
    os.makedirs(root, exist_ok=True)
    clean_train = make_toy_corpus(CORPUS_IMAGES, CORPUS_SIZE, seed * 1000 + 1)
    clean_val = make_toy_corpus(VAL_IMAGES, CORPUS_SIZE, seed * 1000 + 2)
    spec = corruption_spec("noise8", seed * 1000 + 3)
    source = degrade_images(clean_train, spec)

    val_refs, val_lr = [], []
    for i, img in enumerate(clean_val):
        hr_c, lr_c = make_gt_pair(
            img, dataclasses.replace(spec, seed=seed * 1000 + 500 + 2 * i), factor=4.0
        )
        val_refs.append(hr_c)
        val_lr.append(lr_c)

    dsgan_dir = os.path.join(root, "dsgan")
    dsgan_ckpt = os.path.join(dsgan_dir, "checkpoint_final.npz")
    if not os.path.exists(dsgan_ckpt):
        config = TrainConfig.dsgan_defaults(iterations=DSGAN_ITERATIONS, seed=seed)
        run_training(config, DsganData(source, source), dsgan_dir)

    datasets = {}
    for variant in ("sdsr", "tdsr", "bicubic", "gt"):
        ddir = os.path.join(root, f"data_{variant}")
        manifest_path = os.path.join(ddir, "manifest.txt")
        if not os.path.exists(manifest_path):
            if variant == "sdsr":
                build_sdsr_dataset(source, dsgan_ckpt, ddir)
            elif variant == "tdsr":
                build_tdsr_dataset(source, dsgan_ckpt, ddir)
            elif variant == "bicubic":
                build_bicubic_dataset(source, ddir)
            else:
                build_gt_dataset(clean_train, spec, ddir)
        datasets[variant] = manifest_path

    sr_ckpts = {}
    for variant in ("sdsr", "tdsr", "bicubic", "gt"):
        rdir = os.path.join(root, f"sr_{variant}")
        ckpt = os.path.join(rdir, "checkpoint_final.npz")
        if not os.path.exists(ckpt):
            config = TrainConfig.sr_defaults(
                iterations=SR_ITERATIONS,
                warmup_pixel_iters=SR_WARMUP,
                batch_size=8,
                seed=seed,
            )
            run_training(config, DatasetManifest.load(datasets[variant]), rdir)
        sr_ckpts[variant] = ckpt

    return {
        "seed": seed,
        "source": source,
        "source_stat": corpus_stat(source),
        "val_refs": val_refs,
        "val_lr": val_lr,
        "datasets": datasets,
        "sr_ckpts": sr_ckpts,
    }


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    cache = os.environ.get("FSSR_ACCEPTANCE_CACHE")
    if cache:
        root = os.path.join(cache, _fingerprint())
    else:
        root = str(tmp_path_factory.mktemp("acceptance"))
    bundles = [_seed_bundle(seed, os.path.join(root, f"seed{seed}")) for seed in SEEDS]
    return {"root": root, "bundles": bundles}


def _dataset_lr_stat(manifest_path: str) -> float:
    manifest = DatasetManifest.load(manifest_path)
    stats = [
        hf_std_statistic(manifest.read_pair(i)[1], FB5, HF_MARGIN)
        for i in range(len(manifest.records))
    ]
    return float(np.mean(stats))


def _sr_outputs(bundle: dict, variant: str):
    return run_sr_on_images(bundle["sr_ckpts"][variant], bundle["val_lr"])


def _perceptual_vs_refs(outputs, refs, ex) -> float:
    return float(np.mean([perceptual_metric(o, r, ex) for o, r in zip(outputs, refs)]))


# ---------------------------------------------------------------------------
# A3 - characteristic transfer in the generated LR datasets
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestA3CharacteristicTransfer:
    def test_a3(self, artifacts):
        gen_devs, bic_devs = [], []
        for bundle in artifacts["bundles"]:
            src = bundle["source_stat"]
            gen_stat = _dataset_lr_stat(bundle["datasets"]["sdsr"])
            bic_stat = _dataset_lr_stat(bundle["datasets"]["bicubic"])
            gen_devs.append(abs(gen_stat - src) / src)
            bic_devs.append(abs(bic_stat - src) / src)
        gen_median = float(np.median(gen_devs))
        bic_median = float(np.median(bic_devs))
        assert gen_median <= 0.25, f"generated-LR deviation {gen_devs}"
        assert bic_median > 0.50, f"bicubic-LR deviation {bic_devs}"
        report(
            "A3 characteristic transfer",
            f"generated-LR deviation median {gen_median:.3f} (<=0.25), "
            f"bicubic {bic_median:.3f} (>0.5)",
        )

    def test_a3_low_band_stays_anchored(self, artifacts):
        # the translated LR images must not drift from their bicubic input
        # in the low band; that is the color loss's whole job
        worst = 0.0
        spec = ResampleSpec(factor=4.0)
        for bundle in artifacts["bundles"]:
            manifest = DatasetManifest.load(bundle["datasets"]["sdsr"])
            for i in range(0, len(manifest.records), 4):
                hr, lr = manifest.read_pair(i)
                x_b = bicubic_resize(hr, spec)
                drift = float(
                    np.abs(lowpass(lr, FB5) - lowpass(x_b, FB5)).mean()
                )
                worst = max(worst, drift)
        assert worst < 0.05
        report("A3b low-band anchoring", f"worst per-image low-pass drift {worst:.4f} (<0.05)")


# ---------------------------------------------------------------------------
# A4 - SR noise behavior
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestA4SrNoiseBehavior:
    def test_a4(self, artifacts):
        ex = PerceptualExtractor(seed=777)
        ratios, margins = [], []
        for bundle in artifacts["bundles"]:
            outputs_sdsr = _sr_outputs(bundle, "sdsr")
            outputs_bic = _sr_outputs(bundle, "bicubic")
            stat = float(np.mean([hf_std_statistic(o, FB5, HF_MARGIN) for o in outputs_sdsr]))
            ratios.append(stat / bundle["source_stat"])
            p_sdsr = _perceptual_vs_refs(outputs_sdsr, bundle["val_refs"], ex)
            p_bic = _perceptual_vs_refs(outputs_bic, bundle["val_refs"], ex)
            margins.append(p_sdsr / p_bic)
        ratio_median = float(np.median(ratios))
        margin_median = float(np.median(margins))
        assert 0.65 <= ratio_median <= 1.35, f"noise preservation ratios {ratios}"
        assert margin_median <= 0.90, f"perceptual ratios sdsr/bicubic {margins}"
        report(
            "A4 SR noise behavior",
            f"hf ratio median {ratio_median:.3f} (in [0.65, 1.35]), "
            f"perceptual sdsr/bicubic median {margin_median:.3f} (<=0.90)",
        )


# ---------------------------------------------------------------------------
# A5 - TDSR cleaning direction
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestA5TdsrCleaning:
    def test_a5(self, artifacts):
        ratios = []
        for bundle in artifacts["bundles"]:
            stat_tdsr = float(
                np.mean([hf_std_statistic(o, FB5, HF_MARGIN) for o in _sr_outputs(bundle, "tdsr")])
            )
            stat_sdsr = float(
                np.mean([hf_std_statistic(o, FB5, HF_MARGIN) for o in _sr_outputs(bundle, "sdsr")])
            )
            ratios.append(stat_tdsr / stat_sdsr)
        median = float(np.median(ratios))
        assert median <= 0.5, f"tdsr/sdsr statistic ratios {ratios}"
        report("A5 TDSR cleaning direction", f"tdsr/sdsr hf ratio median {median:.3f} (<=0.5)")


# ---------------------------------------------------------------------------
# A6 - ground-truth ordering sanity
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestA6GtOrdering:
    def test_a6(self, artifacts):
        ex = PerceptualExtractor(seed=777)
        per_variant = {"gt": [], "sdsr": [], "bicubic": []}
        for bundle in artifacts["bundles"]:
            for variant in per_variant:
                outputs = _sr_outputs(bundle, variant)
                per_variant[variant].append(
                    _perceptual_vs_refs(outputs, bundle["val_refs"], ex)
                )
        med = {k: float(np.median(v)) for k, v in per_variant.items()}
        assert med["gt"] <= med["sdsr"], f"medians {med}"
        assert med["sdsr"] < med["bicubic"], f"medians {med}"
        report(
            "A6 GT-ordering sanity",
            f"perceptual medians gt {med['gt']:.4f} <= dsgan {med['sdsr']:.4f} "
            f"< bicubic {med['bicubic']:.4f}",
        )


# ---------------------------------------------------------------------------
# A7 - determinism and persistence
# ---------------------------------------------------------------------------


@pytest.mark.slow
class TestA7DeterminismPersistence:
    def test_a7_resume_bit_identical(self, tmp_path):
        from .conftest import smooth_corpus

        clean = smooth_corpus(6, 64, seed=50)
        data = DsganData(hr_images=clean, source_images=clean)
        config = TrainConfig.dsgan_defaults(
            iterations=15, batch_size=2, hr_patch=32, disc_crop=8,
            gen_blocks=2, gen_features=8, disc_plan=(8, 16, 16, 1),
            seed=4, checkpoint_every=5,
        )
        full = run_training(config, data, tmp_path / "full")
        resumed = run_training(
            None, data, tmp_path / "resumed",
            resume_from=tmp_path / "full" / "checkpoint_step000005.npz",
        )
        assert resumed.meta["loss_history"][5:15] == full.meta["loss_history"][5:15]
        for key in full.arrays:
            assert np.array_equal(full.arrays[key], resumed.arrays[key]), key
        report("A7a checkpoint resume", "10 post-resume steps bit-identical")

    def test_a7_roundtrips(self, tmp_path):
        from .conftest import smooth_corpus

        manifest = build_bicubic_dataset(smooth_corpus(2, 64, seed=51), tmp_path / "d")
        text = (tmp_path / "d" / "manifest.txt").read_text()
        assert DatasetManifest.from_text(text).to_text() == text

        sr = tmp_path / "sr"
        gt = tmp_path / "gt"
        sr.mkdir()
        gt.mkdir()
        for i, img in enumerate(smooth_corpus(2, 32, seed=52)):
            write_png16(sr / f"{i}.png", img)
            write_png16(gt / f"{i}.png", img)
        rep = evaluate(sr, gt, PerceptualExtractor(seed=0))
        assert MetricReport.from_text(rep.to_text()).to_text() == rep.to_text()
        report("A7b round-trips", "manifest and metric report byte-identical")

    def test_a7_cli_smoke_pipeline(self, tmp_path):
        from fssr.cli import main

        start = time.time()
        clean_dir = tmp_path / "clean"
        clean_dir.mkdir()
        for i, img in enumerate(make_toy_corpus(8, 128, seed=53)):
            write_png16(clean_dir / f"{i:06d}.png", img)

        smoke_train = [
            "--set", "dsgan.iterations=40", "--set", "dsgan.batch_size=4",
            "--set", "dsgan.gen_blocks=2", "--set", "dsgan.gen_features=16",
            "--set", "dsgan.disc_plan=16,32,64,1",
        ]
        smoke_sr = [
            "--set", "sr.iterations=40", "--set", "sr.warmup_pixel_iters=20",
            "--set", "sr.batch_size=4", "--set", "sr.gen_blocks=2",
            "--set", "sr.gen_features=16", "--set", "sr.disc_plan=16,32,64,1",
        ]
        noisy = tmp_path / "noisy"
        assert main(["degrade", "--in", str(clean_dir), "--out", str(noisy),
                     "--set", "degrade.sigma=8.0"]) == 0
        os.remove(noisy / "effective_config.ini")
        assert main(["train-dsgan", "--hr", str(noisy), "--source", str(noisy),
                     "--out", str(tmp_path / "dsgan")] + smoke_train) == 0
        ckpt = tmp_path / "dsgan" / "checkpoint_final.npz"
        assert main(["make-dataset", "--mode", "sdsr", "--in", str(noisy),
                     "--checkpoint", str(ckpt), "--out", str(tmp_path / "data")]) == 0
        assert main(["train-sr", "--data", str(tmp_path / "data" / "manifest.txt"),
                     "--out", str(tmp_path / "sr_run")] + smoke_sr) == 0
        assert main(["sr", "--checkpoint", str(tmp_path / "sr_run" / "checkpoint_final.npz"),
                     "--in", str(tmp_path / "data" / "lr"),
                     "--out", str(tmp_path / "out")]) == 0
        assert main(["evaluate", "--sr", str(tmp_path / "out"), "--gt", str(noisy),
                     "--report", str(tmp_path / "report.txt")]) == 0
        elapsed = time.time() - start
        assert elapsed < 1800
        report("A7c CLI smoke pipeline", f"exit 0 end to end, {elapsed:.0f}s")
