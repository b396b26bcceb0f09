"""Encoder/decoder assembly around the frequency cross-attention blocks.

Layout: a 3x3 pixel-embedding conv, N groups of M attention blocks (each
group closed by a 3x3 conv and a residual connection), a final 3x3 conv
with a global residual from the shallow embedding, and a task decoder
(plain conv for same-size tasks, pre-shuffle conv + pixel shuffle for
super-resolution). The scalar reliability map passes once through its own
3x3 embedding conv; the result is the prior stream fed to every block.

Besides the guided frequency blocks, the module provides a plain spatial
self-attention block used by the ablation baselines, and two prior fusion
modes: `cross` (the guided attention path) and `multiply` (elementwise
gating of embedded features by the embedded prior).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .gfca import GfcaParams, branch_attention, gfca_block, softmax_scale
from .numerics import (
    Tensor,
    conv2d,
    gelu,
    layer_norm,
    matmul,
    parameter,
    pixel_shuffle,
    reshape,
    tabs,
    tmean,
    transpose,
)

TASKS = ("denoise", "super_resolve", "artifact_removal")
ATTENTION_KINDS = ("gfca", "spatial")
PRIOR_MODES = ("cross", "multiply", "none")


@dataclass
class ModelConfig:
    groups: int = 2
    blocks_per_group: int = 2
    channels: int = 16
    task: str = "denoise"
    scale_factor: int = 2
    heads: int = 1
    softmax_scale: str = "rsqrt_dim"
    attention: str = "gfca"
    adaptive_mixup: bool = True
    prior: str = "cross"

    def __post_init__(self):
        if min(self.groups, self.blocks_per_group, self.channels) < 1:
            raise ValueError("groups, blocks_per_group, channels must be >= 1")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "super_resolve" and self.scale_factor not in (2, 4):
            raise ValueError(
                f"super-resolution factor must be 2 or 4, got {self.scale_factor}"
            )
        if self.attention not in ATTENTION_KINDS:
            raise ValueError(f"unknown attention kind {self.attention!r}")
        if self.prior not in PRIOR_MODES:
            raise ValueError(f"unknown prior mode {self.prior!r}")
        if self.attention == "gfca" and self.prior != "cross":
            raise ValueError("guided frequency attention requires prior='cross'")
        if self.attention == "spatial" and self.prior == "cross":
            raise ValueError(
                "spatial attention has no cross stream; use prior='multiply' "
                "or prior='none'"
            )
        if self.channels % self.heads != 0:
            raise ValueError(
                f"{self.heads} heads do not divide {self.channels} channels"
            )

    def attention_scale(self) -> float:
        return softmax_scale(self.channels, self.heads, self.softmax_scale)


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(cls, c_in: int, c_out: int, rng: np.random.Generator) -> "ConvParams":
        bound = 1.0 / np.sqrt(c_in * 9)
        return cls(
            weight=parameter(rng.uniform(-bound, bound, size=(c_out, c_in, 3, 3))),
            bias=parameter(rng.uniform(-bound, bound, size=c_out)),
        )

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        yield "weight", self.weight
        yield "bias", self.bias


@dataclass
class SpatialBlockParams:
    """Plain self-attention block over pixel tokens (ablation baseline)."""

    wq: Tensor
    wk: Tensor
    wv: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator) -> "SpatialBlockParams":
        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return parameter(rng.uniform(-bound, bound, size=shape))

        hidden = 4 * channels
        return cls(
            wq=uniform((channels, channels), channels),
            wk=uniform((channels, channels), channels),
            wv=uniform((channels, channels), channels),
            ln1_gain=parameter(np.ones(channels)),
            ln1_bias=parameter(np.zeros(channels)),
            ln2_gain=parameter(np.ones(channels)),
            ln2_bias=parameter(np.zeros(channels)),
            mlp_w1=uniform((channels, hidden), channels),
            mlp_b1=uniform((hidden,), channels),
            mlp_w2=uniform((hidden, channels), hidden),
            mlp_b2=uniform((channels,), hidden),
        )

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name in ("wq", "wk", "wv", "ln1_gain", "ln1_bias", "ln2_gain",
                     "ln2_bias", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"):
            yield name, getattr(self, name)


def spatial_block(f: Tensor, params: SpatialBlockParams, scale: float,
                  heads: int = 1) -> Tensor:
    """Pre-norm self-attention + MLP over [H*W, C] pixel tokens."""
    c, h, w = f.shape
    n = h * w
    rows = transpose(reshape(f, (c, n)))
    normed = layer_norm(rows, params.ln1_gain, params.ln1_bias)
    attn = branch_attention(normed, normed, params.wq, params.wk, params.wv,
                            scale, heads)
    y = f + reshape(transpose(attn), (c, h, w))
    rows2 = transpose(reshape(y, (c, n)))
    normed2 = layer_norm(rows2, params.ln2_gain, params.ln2_bias)
    hidden = gelu(matmul(normed2, params.mlp_w1) + params.mlp_b1)
    mlp_out = matmul(hidden, params.mlp_w2) + params.mlp_b2
    return y + reshape(transpose(mlp_out), (c, h, w))


@dataclass
class GroupParams:
    blocks: list
    conv: ConvParams


@dataclass
class ModelParams:
    embed: ConvParams
    prior_embed: ConvParams | None
    groups: list[GroupParams] = field(default_factory=list)
    final_conv: ConvParams | None = None
    pre_shuffle: ConvParams | None = None
    decoder: ConvParams | None = None

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        c = config.channels
        block_cls = GfcaParams if config.attention == "gfca" else SpatialBlockParams
        prior_embed = None
        if config.prior != "none":
            prior_embed = ConvParams.init(1, c, rng)
            if config.prior == "multiply":
                # gating starts near identity so features survive step 0
                prior_embed.bias.data[...] = 1.0
        groups = [
            GroupParams(
                blocks=[block_cls.init(c, rng)
                        for _ in range(config.blocks_per_group)],
                conv=ConvParams.init(c, c, rng),
            )
            for _ in range(config.groups)
        ]
        pre_shuffle = None
        if config.task == "super_resolve":
            r2 = config.scale_factor**2
            pre_shuffle = ConvParams.init(c, c * r2, rng)
        return cls(
            embed=ConvParams.init(1, c, rng),
            prior_embed=prior_embed,
            groups=groups,
            final_conv=ConvParams.init(c, c, rng),
            pre_shuffle=pre_shuffle,
            decoder=ConvParams.init(c, 1, rng),
        )

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self.embed.named_parameters():
            yield f"embed.{name}", t
        if self.prior_embed is not None:
            for name, t in self.prior_embed.named_parameters():
                yield f"prior_embed.{name}", t
        for gi, group in enumerate(self.groups):
            for bi, block in enumerate(group.blocks):
                for name, t in block.named_parameters():
                    yield f"groups.{gi}.blocks.{bi}.{name}", t
            for name, t in group.conv.named_parameters():
                yield f"groups.{gi}.conv.{name}", t
        for name, t in self.final_conv.named_parameters():
            yield f"final_conv.{name}", t
        if self.pre_shuffle is not None:
            for name, t in self.pre_shuffle.named_parameters():
                yield f"pre_shuffle.{name}", t
        for name, t in self.decoder.named_parameters():
            yield f"decoder.{name}", t


def forward(lq_image: Tensor, prior_map: Tensor | None, params: ModelParams,
            config: ModelConfig) -> Tensor:
    """Restore one [1, H, W] image; H*W must be a power of two.

    Same-size tasks return [1, H, W]; super-resolution returns
    [1, rH, rW]. The prior map must match the input extents (it is
    produced on the degraded image) and may be None only with prior='none'.
    """
    if lq_image.data.ndim != 3 or lq_image.shape[0] != 1:
        raise ValueError(f"expected [1, H, W] input, got {lq_image.shape}")
    if config.prior != "none":
        if prior_map is None:
            raise ValueError("this configuration needs a prior map")
        if prior_map.shape != lq_image.shape:
            raise ValueError(
                f"prior shape {prior_map.shape} != image shape {lq_image.shape}"
            )
    scale = config.attention_scale()

    shallow = conv2d(lq_image, params.embed.weight, params.embed.bias)
    x = shallow
    prior_stream = None
    if config.prior == "cross":
        prior_stream = conv2d(prior_map, params.prior_embed.weight,
                              params.prior_embed.bias)
    elif config.prior == "multiply":
        gate = conv2d(prior_map, params.prior_embed.weight,
                      params.prior_embed.bias)
        x = x * gate

    for group in params.groups:
        group_in = x
        for block in group.blocks:
            if config.attention == "gfca":
                x = gfca_block(x, prior_stream, block, scale=scale,
                               heads=config.heads,
                               adaptive=config.adaptive_mixup)
            else:
                x = spatial_block(x, block, scale, config.heads)
        x = group_in + conv2d(x, group.conv.weight, group.conv.bias)

    encoded = shallow + conv2d(x, params.final_conv.weight,
                               params.final_conv.bias)

    if config.task == "super_resolve":
        expanded = conv2d(encoded, params.pre_shuffle.weight,
                          params.pre_shuffle.bias)
        upsampled = pixel_shuffle(expanded, config.scale_factor)
        return conv2d(upsampled, params.decoder.weight, params.decoder.bias)
    return conv2d(encoded, params.decoder.weight, params.decoder.bias)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error; subgradient 0 at exact ties."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return tmean(tabs(pred - target))


def count_parameters(params: ModelParams) -> int:
    return sum(t.data.size for _, t in params.named_parameters())
