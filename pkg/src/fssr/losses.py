"""Training losses for both stages, plus the pluggable perceptual distance.

The generator objective in both stages combines three terms:

* color loss: mean absolute difference between low-pass bands, anchoring
  the output's low frequencies to the reference;
* texture (adversarial) loss: non-saturating GAN loss on discriminator
  scores, where the discriminator only ever sees high-pass filtered
  images — the caller applies the filter before scoring;
* perceptual distance: feature-space distance under a fixed extractor.

The sum-of-absolute-values in the color loss is realized as a per-pixel
mean so magnitudes are patch-size invariant and the fixed combination
weights transfer across patch sizes. Logs of sigmoids are computed in
softplus form; no explicit epsilon clamping is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .kernels import FilterBank

__all__ = [
    "LossWeights",
    "PerceptualExtractor",
    "tensor_lowpass",
    "tensor_highpass",
    "color_loss",
    "adversarial_gen_loss",
    "adversarial_disc_loss",
    "perceptual_distance",
    "dsgan_generator_loss",
    "sr_generator_loss",
]


@dataclass(frozen=True)
class LossWeights:
    """Combination weights for the three generator loss terms."""

    w_color: float
    w_texture: float
    w_perceptual: float

    def __post_init__(self) -> None:
        if min(self.w_color, self.w_texture, self.w_perceptual) < 0:
            raise ValueError(f"loss weights must be >= 0: {self}")

    @classmethod
    def dsgan_defaults(cls) -> "LossWeights":
        # downsampler generator: color-anchored, light adversarial/perceptual
        return cls(w_color=1.0, w_texture=0.005, w_perceptual=0.01)

    @classmethod
    def sr_defaults(cls) -> "LossWeights":
        # SR generator: perceptual-led, light adversarial, light color
        return cls(w_color=0.01, w_texture=0.005, w_perceptual=1.0)


def _lowpass_weight(fb: FilterBank, channels: int, dtype, device) -> torch.Tensor:
    w = torch.from_numpy(fb.lowpass_weights).to(dtype=dtype, device=device)
    return w.expand(channels, 1, *w.shape).contiguous()


def tensor_lowpass(x: torch.Tensor, fb: FilterBank) -> torch.Tensor:
    """Low-pass an NCHW tensor; matches the numpy path within float error."""
    pad = fb.radius
    if pad == 0:
        return x
    w = _lowpass_weight(fb, x.shape[1], x.dtype, x.device)
    padded = F.pad(x, (pad,) * 4, mode="reflect")
    return F.conv2d(padded, w, groups=x.shape[1])


def tensor_highpass(x: torch.Tensor, fb: FilterBank) -> torch.Tensor:
    return x - tensor_lowpass(x, fb)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def color_loss(fake: torch.Tensor, ref: torch.Tensor, fb: FilterBank) -> torch.Tensor:
    """Per-pixel mean absolute difference between low-pass bands."""
    _check_same_shape(fake, ref)
    diff = tensor_lowpass(fake, fb) - tensor_lowpass(ref, fb)
    return diff.abs().mean(dim=(1, 2, 3)).mean()


def adversarial_gen_loss(disc_scores: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss: -mean log sigmoid(score).

    Scores come from the discriminator applied to high-pass filtered
    generator output; the per-map mean is taken before the batch mean.
    """
    return F.softplus(-disc_scores).mean(dim=tuple(range(1, disc_scores.ndim))).mean()


def adversarial_disc_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """Discriminator objective: -mean log D(real) - mean log(1 - D(fake)).

    Real and fake maps may have different spatial sizes; each side is
    map-averaged, then batch-averaged.
    """
    real_term = F.softplus(-real_scores).mean(dim=tuple(range(1, real_scores.ndim))).mean()
    fake_term = F.softplus(fake_scores).mean(dim=tuple(range(1, fake_scores.ndim))).mean()
    return real_term + fake_term


class PerceptualExtractor(nn.Module):
    """Feature extractor behind the perceptual distance.

    The default mode is a fixed-seed three-level random convolutional
    pyramid: conv + leaky rectifier per level with 2x average pooling in
    between. Its weights are deterministic buffers, never trained. A
    pretrained feature stack can be dropped in via ``external_features``:
    any callable mapping an NCHW tensor to a list of feature tensors.
    """

    LEVEL_CHANNELS = (16, 32, 64)

    def __init__(
        self,
        mode: str = "fixed_random_pyramid",
        seed: int = 0,
        layer_weights: tuple[float, ...] = (1.0, 1.0, 1.0),
        external_features=None,
    ):
        super().__init__()
        if mode not in ("fixed_random_pyramid", "external_pretrained"):
            raise ValueError(f"unknown extractor mode {mode!r}")
        if mode == "external_pretrained" and external_features is None:
            raise ValueError("external_pretrained mode needs an external_features callable")
        self.mode = mode
        self.seed = seed
        self.layer_weights = tuple(float(w) for w in layer_weights)
        self.external_features = external_features
        if mode == "fixed_random_pyramid":
            if len(self.layer_weights) != len(self.LEVEL_CHANNELS):
                raise ValueError("layer_weights must have one entry per pyramid level")
            gen = torch.Generator().manual_seed(seed)
            c_in = 3
            for i, c_out in enumerate(self.LEVEL_CHANNELS):
                w = torch.empty(c_out, c_in, 3, 3)
                w.normal_(0.0, (2.0 / (9 * c_in)) ** 0.5, generator=gen)
                self.register_buffer(f"weight{i}", w)
                c_in = c_out

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        if self.mode == "external_pretrained":
            return list(self.external_features(x))
        feats = []
        h = x
        for i in range(len(self.LEVEL_CHANNELS)):
            w = getattr(self, f"weight{i}").to(x.dtype)
            h = F.leaky_relu(F.conv2d(F.pad(h, (1, 1, 1, 1), mode="reflect"), w), 0.2)
            feats.append(h)
            if i < len(self.LEVEL_CHANNELS) - 1:
                h = F.avg_pool2d(h, 2)
        return feats

    @staticmethod
    def _unit_normalize(f: torch.Tensor) -> torch.Tensor:
        norm = torch.sqrt((f**2).sum(dim=1, keepdim=True) + 1e-10)
        return f / norm

    def distance(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        _check_same_shape(a, b)
        feats_a = self.features(a)
        feats_b = self.features(b)
        weights = self.layer_weights
        if len(weights) != len(feats_a):
            raise ValueError("layer_weights length does not match extracted feature count")
        total = a.new_zeros(())
        for w, fa, fb_ in zip(weights, feats_a, feats_b):
            na = self._unit_normalize(fa)
            nb = self._unit_normalize(fb_)
            total = total + w * ((na - nb) ** 2).mean(dim=(1, 2, 3)).mean()
        return total

    def config(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "layer_weights": list(self.layer_weights)}


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, ex: PerceptualExtractor) -> torch.Tensor:
    return ex.distance(a, b)


def dsgan_generator_loss(
    fake_lr: torch.Tensor,
    bicubic_lr: torch.Tensor,
    disc_scores: torch.Tensor,
    weights: LossWeights,
    fb: FilterBank,
    ex: PerceptualExtractor,
):
    """Weighted generator objective for the downsampling stage.

    Returns (total, components); components are plain floats for logging.
    """
    col = color_loss(fake_lr, bicubic_lr, fb)
    tex = adversarial_gen_loss(disc_scores)
    per = perceptual_distance(fake_lr, bicubic_lr, ex)
    total = weights.w_color * col + weights.w_texture * tex + weights.w_perceptual * per
    return total, {"color": float(col.detach()), "texture": float(tex.detach()), "perceptual": float(per.detach())}


def sr_generator_loss(
    sr_out: torch.Tensor,
    hr_ref: torch.Tensor,
    disc_scores: torch.Tensor,
    weights: LossWeights,
    fb: FilterBank,
    ex: PerceptualExtractor,
):
    """Weighted generator objective for the SR stage.

    Color compares low-pass bands, the adversarial term scores high-pass
    content (filtering happens before the discriminator), and the
    perceptual distance sees the full-band images.
    """
    col = color_loss(sr_out, hr_ref, fb)
    adv = adversarial_gen_loss(disc_scores)
    per = perceptual_distance(sr_out, hr_ref, ex)
    total = weights.w_color * col + weights.w_texture * adv + weights.w_perceptual * per
    return total, {"color": float(col.detach()), "adversarial": float(adv.detach()), "perceptual": float(per.detach())}
