"""Reliable prior production from repeated stochastic segmentations.

A pluggable segmenter is run T times with inference-time dropout; the
sampled masks are fused into a consistency map C (pairwise agreement), a
discrepancy map D (pairwise disagreement), and the reliability map
U = alpha*C + beta*D that guides restoration. The real foundation-model
backbone is out of scope; `ToySegmenter` is a small fixed-weight stand-in
with the same sampling behavior.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Protocol

import numpy as np

from .numerics import Tensor, conv2d

DEFAULT_SAMPLES = 4
DEFAULT_ALPHA = 0.5
DEFAULT_BETA = 0.5


@dataclass
class SegmentationSample:
    """One stochastic mask, values in [0, 1]."""

    mask: np.ndarray

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float64)
        if self.mask.min() < 0.0 or self.mask.max() > 1.0:
            raise ValueError("mask values must lie in [0, 1]")


class StochasticSegmenter(Protocol):
    """Seeded stochastic forward pass; same (image, seed) gives the same mask."""

    dropout_rate: float

    def segment(self, image: np.ndarray, seed: int) -> SegmentationSample: ...


@dataclass
class ReliablePrior:
    """Fused consistency/discrepancy/reliability maps from T samples."""

    consistency: np.ndarray
    discrepancy: np.ndarray
    reliability: np.ndarray
    alpha: float
    beta: float
    samples: int


class ToySegmenter:
    """Three 3x3 conv layers with fixed random weights and MC dropout.

    Dropout is applied after each of the two hidden activations (mirroring
    a frozen backbone with two appended dropout layers); the output map is
    a sigmoid, so values are strictly inside (0, 1). Weights are drawn once
    from `weight_seed` and never change, so the only stochasticity is the
    per-call dropout seed.
    """

    def __init__(self, channels: int = 8, dropout_rate: float = 0.1,
                 weight_seed: int = 0):
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError(
                f"dropout_rate must be in [0, 1), got {dropout_rate}"
            )
        if channels < 1:
            raise ValueError(f"channels must be >= 1, got {channels}")
        self.channels = channels
        self.dropout_rate = float(dropout_rate)
        rng = np.random.default_rng(weight_seed)

        def fan_in_uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        self._w1 = fan_in_uniform((channels, 1, 3, 3), 9)
        self._b1 = fan_in_uniform((channels,), 9)
        self._w2 = fan_in_uniform((channels, channels, 3, 3), 9 * channels)
        self._b2 = fan_in_uniform((channels,), 9 * channels)
        self._w3 = fan_in_uniform((1, channels, 3, 3), 9 * channels)
        self._b3 = fan_in_uniform((1,), 9 * channels)

    def _dropout(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.dropout_rate == 0.0:
            return x
        keep = rng.random(x.shape) >= self.dropout_rate
        return x * keep / (1.0 - self.dropout_rate)

    def segment(self, image: np.ndarray, seed: int) -> SegmentationSample:
        image = np.asarray(image, dtype=np.float64)
        if image.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {image.shape}")
        rng = np.random.default_rng(seed)
        x = image[None, :, :]
        h = np.maximum(conv2d(Tensor(x), Tensor(self._w1), Tensor(self._b1)).data, 0.0)
        h = self._dropout(h, rng)
        h = np.maximum(conv2d(Tensor(h), Tensor(self._w2), Tensor(self._b2)).data, 0.0)
        h = self._dropout(h, rng)
        logits = conv2d(Tensor(h), Tensor(self._w3), Tensor(self._b3)).data[0]
        mask = 1.0 / (1.0 + np.exp(-logits))
        return SegmentationSample(mask=mask)


def toy_segmenter(channels: int = 8, dropout_rate: float = 0.1,
                  weight_seed: int = 0) -> ToySegmenter:
    return ToySegmenter(channels=channels, dropout_rate=dropout_rate,
                        weight_seed=weight_seed)


def mc_mean(segmenter: StochasticSegmenter, image: np.ndarray, samples: int,
            base_seed: int) -> np.ndarray:
    """Monte-Carlo estimate of the predictive mean: average of T seeded passes."""
    if samples < 1:
        raise ValueError(f"need at least 1 sample, got {samples}")
    total = None
    for t in range(samples):
        mask = segmenter.segment(image, base_seed + t).mask
        total = mask if total is None else total + mask
    return total / samples


def fuse(samples: list[SegmentationSample], alpha: float = DEFAULT_ALPHA,
         beta: float = DEFAULT_BETA) -> ReliablePrior:
    """Fuse sampled masks into consistency/discrepancy/reliability maps.

    Agreement is the union over all unordered pairs of the pairwise
    intersection (elementwise max of min); disagreement is the union of
    pairwise absolute differences. For binary masks this is exactly the
    set-theoretic reading, and it extends continuously to soft masks.
    """
    if len(samples) < 2:
        raise ValueError(f"need at least 2 samples to fuse, got {len(samples)}")
    if alpha < 0.0 or beta < 0.0:
        raise ValueError(f"weights must be non-negative, got {alpha}, {beta}")
    masks = [s.mask for s in samples]
    shape = masks[0].shape
    for m in masks[1:]:
        if m.shape != shape:
            raise ValueError("all masks must share one shape")
    consistency = np.zeros(shape)
    discrepancy = np.zeros(shape)
    for i, j in combinations(range(len(masks)), 2):
        np.maximum(consistency, np.minimum(masks[i], masks[j]), out=consistency)
        np.maximum(discrepancy, np.abs(masks[i] - masks[j]), out=discrepancy)
    reliability = alpha * consistency + beta * discrepancy
    return ReliablePrior(consistency=consistency, discrepancy=discrepancy,
                         reliability=reliability, alpha=alpha, beta=beta,
                         samples=len(samples))


def produce_prior(segmenter: StochasticSegmenter, image: np.ndarray,
                  samples: int = DEFAULT_SAMPLES, alpha: float = DEFAULT_ALPHA,
                  beta: float = DEFAULT_BETA, base_seed: int = 0) -> ReliablePrior:
    """Run T seeded passes and fuse them; pure in all of its arguments."""
    if samples < 2:
        raise ValueError(f"need at least 2 samples for a prior, got {samples}")
    drawn = [segmenter.segment(image, base_seed + t) for t in range(samples)]
    return fuse(drawn, alpha=alpha, beta=beta)
