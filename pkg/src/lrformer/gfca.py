"""Guided frequency cross-attention over the packed half spectrum.

The block normalizes image and prior features, flattens each channel to a
row and transforms it with the packed real FFT, runs cross-attention
separately on the real and imaginary planes (frequency bins are the
tokens, channels the features; queries and values come from the image
stream, keys from the prior stream), exchanges information between the
two branches with a sigmoid-gated adaptive mixup, inverts the transform,
and finishes with the usual pre-norm MLP. Residual connections wrap both
the attention and MLP sub-layers.

The imaginary plane of a real signal is identically zero at the DC and
Nyquist bins, so the imaginary branch attends over the interior bins
only: the dropped tokens carry no information, and the per-branch
attention matrix stays at roughly a quarter of the spatial-attention
size. Before inversion the mixed imaginary plane is projected back onto
valid packed spectra by zeroing those two rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .numerics import (
    Tensor,
    col_slice,
    concat_cols,
    gelu,
    irfft_tokens,
    layer_norm,
    matmul,
    pad_rows,
    parameter,
    reshape,
    rfft_tokens,
    row_slice,
    sigmoid,
    softmax_rows,
    transpose,
)


@dataclass
class BranchPair:
    """Frequency tokens of one feature map: [bins x C] per branch."""

    real_branch: Tensor
    imag_branch: Tensor

    def __post_init__(self):
        if self.real_branch.shape != self.imag_branch.shape:
            raise ValueError(
                f"branch shapes differ: {self.real_branch.shape} vs "
                f"{self.imag_branch.shape}"
            )

    @property
    def bins(self) -> int:
        return self.real_branch.shape[0]


@dataclass
class GfcaParams:
    """Learnable state of one block."""

    wq_r: Tensor
    wk_r: Tensor
    wv_r: Tensor
    wq_i: Tensor
    wk_i: Tensor
    wv_i: Tensor
    theta: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor

    @classmethod
    def init(cls, channels: int, rng: np.random.Generator) -> "GfcaParams":
        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return parameter(rng.uniform(-bound, bound, size=shape))

        hidden = 4 * channels
        return cls(
            wq_r=uniform((channels, channels), channels),
            wk_r=uniform((channels, channels), channels),
            wv_r=uniform((channels, channels), channels),
            wq_i=uniform((channels, channels), channels),
            wk_i=uniform((channels, channels), channels),
            wv_i=uniform((channels, channels), channels),
            theta=parameter(0.0),
            ln1_gain=parameter(np.ones(channels)),
            ln1_bias=parameter(np.zeros(channels)),
            ln2_gain=parameter(np.ones(channels)),
            ln2_bias=parameter(np.zeros(channels)),
            mlp_w1=uniform((channels, hidden), channels),
            mlp_b1=uniform((hidden,), channels),
            mlp_w2=uniform((hidden, channels), hidden),
            mlp_b2=uniform((channels,), hidden),
        )

    @classmethod
    def zeros(cls, channels: int) -> "GfcaParams":
        rng = np.random.default_rng(0)
        p = cls.init(channels, rng)
        for _, t in p.named_parameters():
            t.data[...] = 0.0
        return p

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name in ("wq_r", "wk_r", "wv_r", "wq_i", "wk_i", "wv_i", "theta",
                     "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                     "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2"):
            yield name, getattr(self, name)


def softmax_scale(channels: int, heads: int = 1, mode: str = "rsqrt_dim") -> float:
    """Attention logit scale: 1/sqrt(head_dim), or 1 in unit mode."""
    if mode == "unit":
        return 1.0
    if mode == "rsqrt_dim":
        return 1.0 / np.sqrt(channels // heads)
    raise ValueError(f"unknown softmax scale mode {mode!r}")


def to_frequency_tokens(features: Tensor) -> BranchPair:
    """[C, H, W] feature map to per-branch frequency tokens [bins, C]."""
    c, h, w = features.shape
    n = h * w
    flat = reshape(features, (c, n))
    re, im = rfft_tokens(flat)
    return BranchPair(real_branch=transpose(re), imag_branch=transpose(im))


def from_frequency_tokens(pair: BranchPair, height: int, width: int) -> Tensor:
    """Inverse of to_frequency_tokens; imag DC/Nyquist rows must be zero."""
    n = height * width
    c = pair.real_branch.shape[1]
    flat = irfft_tokens(transpose(pair.real_branch),
                        transpose(pair.imag_branch), n)
    return reshape(flat, (c, height, width))


def branch_attention(tokens_l: Tensor, tokens_u: Tensor, wq: Tensor,
                     wk: Tensor, wv: Tensor, scale: float,
                     heads: int = 1) -> Tensor:
    """softmax((tokens_l Q)(tokens_u K)^T * scale) (tokens_l V).

    Queries and values project the image-stream tokens, keys the
    prior-stream tokens. Token counts of the two streams must match.
    """
    if tokens_l.shape != tokens_u.shape:
        raise ValueError(
            f"token shapes differ: {tokens_l.shape} vs {tokens_u.shape}"
        )
    channels = tokens_l.shape[1]
    if channels % heads != 0:
        raise ValueError(f"{heads} heads do not divide {channels} channels")
    q = matmul(tokens_l, wq)
    k = matmul(tokens_u, wk)
    v = matmul(tokens_l, wv)
    if heads == 1:
        weights = softmax_rows(matmul(q, transpose(k)) * scale)
        return matmul(weights, v)
    dim = channels // heads
    outputs = []
    for h in range(heads):
        qh = col_slice(q, h * dim, (h + 1) * dim)
        kh = col_slice(k, h * dim, (h + 1) * dim)
        vh = col_slice(v, h * dim, (h + 1) * dim)
        weights = softmax_rows(matmul(qh, transpose(kh)) * scale)
        outputs.append(matmul(weights, vh))
    return concat_cols(outputs)


def adaptive_mixup(attn_r: Tensor, attn_i: Tensor,
                   theta: Tensor) -> tuple[Tensor, Tensor]:
    """Sigmoid-gated exchange between the real and imaginary branches.

    ca_r = sig(theta) * attn_r + (1 - sig(theta)) * attn_i and vice versa;
    the pair sum is preserved (the gate and its complement add to one), so
    the mixup redistributes rather than creates signal.
    """
    if attn_r.shape != attn_i.shape:
        raise ValueError(
            f"branch shapes differ: {attn_r.shape} vs {attn_i.shape}"
        )
    gate = sigmoid(theta)
    ca_r = gate * attn_r + (1.0 - gate) * attn_i
    ca_i = gate * attn_i + (1.0 - gate) * attn_r
    return ca_r, ca_i


def _interior_edge_mask(bins: int) -> Tensor:
    mask = np.ones((bins, 1))
    mask[0, 0] = 0.0
    mask[-1, 0] = 0.0
    return Tensor(mask)


def gfca_block(f_l: Tensor, f_u: Tensor, params: GfcaParams,
               scale: float | None = None, heads: int = 1,
               adaptive: bool = True) -> Tensor:
    """One full block: LN -> FFT -> dual-branch CA -> mixup -> iFFT -> MLP.

    `f_l` is the image-stream feature map, `f_u` the prior-stream map;
    both are [C, H, W] with H*W a power of two. `adaptive=False` skips the
    mixup exchange (the ablation variant). Output has the input shape.
    """
    if f_l.shape != f_u.shape:
        raise ValueError(f"stream shapes differ: {f_l.shape} vs {f_u.shape}")
    c, h, w = f_l.shape
    n = h * w
    if scale is None:
        scale = softmax_scale(c, heads)

    def norm_tokens(fmap):
        rows = transpose(reshape(fmap, (c, n)))
        return transpose(layer_norm(rows, params.ln1_gain, params.ln1_bias))

    freq_l = to_frequency_tokens(reshape(norm_tokens(f_l), (c, h, w)))
    freq_u = to_frequency_tokens(reshape(norm_tokens(f_u), (c, h, w)))
    bins = freq_l.bins

    attn_r = branch_attention(freq_l.real_branch, freq_u.real_branch,
                              params.wq_r, params.wk_r, params.wv_r,
                              scale, heads)
    # Imaginary branch: the DC/Nyquist tokens are structurally zero for a
    # real signal, so attention runs over the interior bins only.
    attn_i_interior = branch_attention(
        row_slice(freq_l.imag_branch, 1, bins - 1),
        row_slice(freq_u.imag_branch, 1, bins - 1),
        params.wq_i, params.wk_i, params.wv_i, scale, heads)
    attn_i = pad_rows(attn_i_interior, 1, 1)

    if adaptive:
        ca_r, ca_i = adaptive_mixup(attn_r, attn_i, params.theta)
        # Project the mixed imaginary plane back onto valid packed spectra.
        ca_i = ca_i * _interior_edge_mask(bins)
    else:
        ca_r, ca_i = attn_r, attn_i

    mixed = BranchPair(real_branch=ca_r, imag_branch=ca_i)
    y = f_l + from_frequency_tokens(mixed, h, w)

    rows = transpose(reshape(y, (c, n)))
    normed = layer_norm(rows, params.ln2_gain, params.ln2_bias)
    hidden = gelu(matmul(normed, params.mlp_w1) + params.mlp_b1)
    mlp_out = matmul(hidden, params.mlp_w2) + params.mlp_b2
    return y + reshape(transpose(mlp_out), (c, h, w))
