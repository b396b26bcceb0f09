"""Central finite-difference oracle for the reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor


def numerical_gradient(loss_fn: Callable[[], Tensor], leaf: Tensor,
                       flat_index: int, step: float = 1e-5) -> float:
    """Central difference d(loss)/d(leaf[flat_index])."""
    flat = leaf.data.reshape(-1)
    saved = flat[flat_index]
    flat[flat_index] = saved + step
    up = float(loss_fn().data)
    flat[flat_index] = saved - step
    down = float(loss_fn().data)
    flat[flat_index] = saved
    return (up - down) / (2.0 * step)


def check_gradients(loss_fn: Callable[[], Tensor],
                    leaves: Sequence[Tensor],
                    rng: np.random.Generator,
                    num_samples: int = 20,
                    step: float = 1e-5) -> float:
    """Compare backward() against central differences on sampled coordinates.

    Samples `num_samples` (leaf, coordinate) pairs, spreading picks across
    all leaves, and returns the worst relative error
    |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    for leaf in leaves:
        leaf.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = []
    for leaf in leaves:
        if leaf.grad is None:
            raise ValueError("a sampled leaf received no gradient")
        analytic.append(leaf.grad.reshape(-1).copy())

    sizes = np.array([leaf.data.size for leaf in leaves])
    worst = 0.0
    for _ in range(num_samples):
        which = int(rng.integers(len(leaves)))
        idx = int(rng.integers(sizes[which]))
        numeric = numerical_gradient(loss_fn, leaves[which], idx, step)
        a = analytic[which][idx]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, err)
    return worst
