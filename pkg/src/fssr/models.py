"""Network constructors: downsampler generator, patch discriminator, SR generator.

All networks are fully convolutional. Generators use reflection-padded
convolutions so they can run on full images without seam artifacts; the
patch discriminator uses zero same-padding and returns a dense 2D map of
raw (pre-sigmoid) realness scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

__all__ = [
    "GeneratorSpec",
    "DiscriminatorSpec",
    "SRGeneratorSpec",
    "DsganGenerator",
    "PatchDiscriminator",
    "SrGenerator",
    "build_dsgan_generator",
    "build_patch_discriminator",
    "build_sr_generator",
    "forward",
    "to_tensor",
    "to_images",
    "count_parameters",
]


@dataclass(frozen=True)
class GeneratorSpec:
    """Image-to-image residual generator operating at constant resolution."""

    num_residual_blocks: int = 8
    features: int = 64
    kernel_size: int = 3
    global_skip: bool = True

    def __post_init__(self) -> None:
        if self.num_residual_blocks < 1 or self.features < 1:
            raise ValueError(f"invalid generator spec: {self}")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd")


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Fully convolutional realness scorer emitting one score per pixel.

    Defaults give four 5x5 stride-1 layers with features 64/128/256/1,
    batch normalization between the convolutions (never before the first),
    and leaky rectifier activations.
    """

    layers: int = 4
    kernel_size: int = 5
    feature_plan: tuple[int, ...] = (64, 128, 256, 1)
    strides: tuple[int, ...] = (1, 1, 1, 1)
    norm: str = "batch"
    lrelu_slope: float = 0.2

    def __post_init__(self) -> None:
        if len(self.feature_plan) != self.layers or len(self.strides) != self.layers:
            raise ValueError("feature_plan/strides length must equal layers")
        if self.feature_plan[-1] != 1:
            raise ValueError("final layer must emit a single score channel")
        if any(s != 1 for s in self.strides):
            raise ValueError("only stride-1 discriminators are supported")

    @property
    def receptive_radius(self) -> int:
        return self.layers * (self.kernel_size - 1) // 2


@dataclass(frozen=True)
class SRGeneratorSpec:
    """Residual SR generator with two pixel-shuffle x2 stages (x4 total)."""

    num_blocks: int = 8
    features: int = 64
    upscale_factor: int = 4

    def __post_init__(self) -> None:
        if self.num_blocks < 1 or self.features < 1:
            raise ValueError(f"invalid SR generator spec: {self}")
        if self.upscale_factor != 4:
            raise ValueError("only x4 upscaling is supported")


class _ReflectConv(nn.Module):
    """Conv2d with reflection padding folded in."""

    def __init__(self, c_in, c_out, k):
        super().__init__()
        self.pad = k // 2
        self.conv = nn.Conv2d(c_in, c_out, k, padding=0)

    def forward(self, x):
        return self.conv(F.pad(x, (self.pad,) * 4, mode="reflect"))


class _ResidualBlock(nn.Module):
    def __init__(self, features, k):
        super().__init__()
        self.conv1 = _ReflectConv(features, features, k)
        self.conv2 = _ReflectConv(features, features, k)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class DsganGenerator(nn.Module):
    """Translates an image while preserving resolution and channel count."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        k, f = spec.kernel_size, spec.features
        self.head = _ReflectConv(3, f, k)
        self.blocks = nn.ModuleList(
            _ResidualBlock(f, k) for _ in range(spec.num_residual_blocks)
        )
        self.tail = _ReflectConv(f, 3, k)

    def forward(self, x):
        h = self.head(x)
        for block in self.blocks:
            h = block(h)
        out = self.tail(h)
        if self.spec.global_skip:
            out = out + x
        return out


class PatchDiscriminator(nn.Module):
    """Emits a raw score map; squash with a sigmoid to get probabilities."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        k = spec.kernel_size
        convs, norms = [], []
        c_in = 3
        for i, c_out in enumerate(spec.feature_plan):
            convs.append(_ReflectConv(c_in, c_out, k))
            # normalization sits between the convolutions: never before the
            # first layer, never after the last
            use_norm = spec.norm == "batch" and 0 < i < spec.layers - 1
            norms.append(nn.BatchNorm2d(c_out) if use_norm else nn.Identity())
            c_in = c_out
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(norms)
        self.slope = spec.lrelu_slope

    def forward(self, x):
        if min(x.shape[-2], x.shape[-1]) < self.spec.kernel_size:
            raise ValueError(
                f"input {tuple(x.shape[-2:])} smaller than the {self.spec.kernel_size}px kernel"
            )
        h = x
        last = len(self.convs) - 1
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            h = conv(h)
            if i < last:
                h = F.leaky_relu(norm(h), self.slope)
        return h


class SrGenerator(nn.Module):
    """x4 upscaler: residual trunk, two pixel-shuffle stages, bilinear skip.

    With a zeroed trunk the output is exactly the bilinear x4 upscale of
    the input, which makes the initial state a smooth-upscaling baseline.
    """

    def __init__(self, spec: SRGeneratorSpec):
        super().__init__()
        self.spec = spec
        f = spec.features
        self.head = _ReflectConv(3, f, 3)
        self.blocks = nn.ModuleList(_ResidualBlock(f, 3) for _ in range(spec.num_blocks))
        self.up1 = _ReflectConv(f, 4 * f, 3)
        self.up2 = _ReflectConv(f, 4 * f, 3)
        self.tail = _ReflectConv(f, 3, 3)

    def forward(self, x):
        h = self.head(x)
        for block in self.blocks:
            h = block(h)
        h = F.relu(F.pixel_shuffle(self.up1(h), 2))
        h = F.relu(F.pixel_shuffle(self.up2(h), 2))
        out = self.tail(h)
        skip = F.interpolate(x, scale_factor=4, mode="bilinear", align_corners=False)
        return out + skip


def _init_weights(module: nn.Module, seed: int, damp: tuple[nn.Conv2d, ...] = ()) -> None:
    """Kaiming fan-in init for convs with zero biases.

    Convs listed in `damp` (residual-block exits and the generator tail)
    are scaled by 0.1 afterwards so generators start close to their skip
    path instead of amplifying variance through the trunk.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            std = math.sqrt(2.0 / fan_in)
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
    with torch.no_grad():
        for conv in damp:
            conv.weight.mul_(0.1)


def build_dsgan_generator(spec: GeneratorSpec, seed: int = 0) -> DsganGenerator:
    net = DsganGenerator(spec)
    damp = tuple(b.conv2.conv for b in net.blocks) + (net.tail.conv,)
    _init_weights(net, seed, damp=damp)
    return net


def build_patch_discriminator(spec: DiscriminatorSpec, seed: int = 0) -> PatchDiscriminator:
    net = PatchDiscriminator(spec)
    _init_weights(net, seed)
    return net


def build_sr_generator(spec: SRGeneratorSpec, seed: int = 0) -> SrGenerator:
    net = SrGenerator(spec)
    damp = tuple(b.conv2.conv for b in net.blocks) + (net.tail.conv,)
    _init_weights(net, seed, damp=damp)
    return net


def to_tensor(images: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    """(N, H, W, C) or (H, W, C) numpy to NCHW tensor."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise ValueError(f"expected 3D or 4D array, got shape {arr.shape}")
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def to_images(t: torch.Tensor) -> np.ndarray:
    """NCHW tensor to (N, H, W, C) float64 numpy."""
    return t.detach().cpu().numpy().transpose(0, 2, 3, 1).astype(np.float64)


def forward(handle: nn.Module, images: np.ndarray) -> np.ndarray:
    """Run a network in evaluation mode on a batch of images.

    Batch normalization uses running statistics; the result is a
    deterministic function of weights and inputs.
    """
    single = np.asarray(images).ndim == 3
    x = to_tensor(images, dtype=next(handle.parameters()).dtype)
    was_training = handle.training
    handle.eval()
    try:
        with torch.no_grad():
            y = handle(x)
    finally:
        handle.train(was_training)
    out = to_images(y)
    return out[0] if single else out


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
