"""Reverse-mode differentiation over float64 numpy arrays.

A `Tensor` wraps an ndarray and, when gradients are enabled, remembers the
operation that produced it as a vector-Jacobian closure. `backward()` on a
scalar walks the tape in reverse topological order and accumulates `.grad`
on every tensor created with `requires_grad=True`.

The op set is deliberately small: elementwise arithmetic with numpy
broadcasting, matmul, reductions, the neural primitives (layer norm, row
softmax, 3x3 convolution, pixel shuffle, GELU, sigmoid), shape surgery
(reshape/transpose/row and column slices/concat), and the packed real FFT
pair. Everything runs in double precision.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from . import fft as _fft

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (forward-only evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """A float64 array plus the tape bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], tuple[np.ndarray, ...]] | None = None

    # -- graph plumbing ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def _tracked(self) -> bool:
        return self.requires_grad or bool(self._parents)

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self) -> None:
        """Populate .grad of every reachable requires_grad tensor.

        Only valid on a scalar (the loss); raises otherwise.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar root, got shape {self.data.shape}"
            )
        # Postorder DFS so parents precede consumers in `order`.
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p._tracked() and id(p) not in seen:
                    stack.append((p, False))

        pending: dict[int, np.ndarray] = {
            id(self): np.ones_like(self.data)
        }
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            if node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent._tracked():
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + pg
                else:
                    pending[key] = pg

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Tensor:
    """A learnable leaf: gradients accumulate here."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p._tracked() for p in parents):
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to `shape`."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data
    return _make(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data
    return _make(out, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data
    return _make(out, (a, b), lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape)))


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(
            f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    out = a.data @ b.data
    return _make(out, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def tsum(x) -> Tensor:
    x = _wrap(x)
    out = np.asarray(x.data.sum())
    return _make(out, (x,), lambda g: (np.broadcast_to(g, x.data.shape).copy(),))


def tmean(x) -> Tensor:
    x = _wrap(x)
    n = x.data.size
    out = np.asarray(x.data.mean())
    return _make(out, (x,), lambda g: (
        np.broadcast_to(g / n, x.data.shape).copy(),))


def tabs(x) -> Tensor:
    """Elementwise |x| with subgradient 0 at exact zeros."""
    x = _wrap(x)
    sign = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * sign,))


def sigmoid(x) -> Tensor:
    x = _wrap(x)
    y = 1.0 / (1.0 + np.exp(-np.clip(x.data, -500.0, 500.0)))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x) -> Tensor:
    """Exact (erf-based) GELU; smooth, so finite-difference checks are clean."""
    x = _wrap(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = x.data * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data**2)
        return (g * (cdf + x.data * pdf),)

    return _make(out, (x,), vjp)


# -- shape surgery -----------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = _wrap(x)
    orig = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(orig),))


def transpose(x) -> Tensor:
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ValueError(f"transpose expects a 2-D tensor, got {x.data.shape}")
    return _make(np.ascontiguousarray(x.data.T), (x,),
                 lambda g: (np.ascontiguousarray(g.T),))


def row_slice(x, start: int, stop: int) -> Tensor:
    x = _wrap(x)
    out = np.ascontiguousarray(x.data[start:stop])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return _make(out, (x,), vjp)


def col_slice(x, start: int, stop: int) -> Tensor:
    x = _wrap(x)
    out = np.ascontiguousarray(x.data[:, start:stop])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        return (full,)

    return _make(out, (x,), vjp)


def pad_rows(x, before: int, after: int) -> Tensor:
    """Prepend/append zero rows along axis 0."""
    x = _wrap(x)
    widths = ((before, after),) + ((0, 0),) * (x.data.ndim - 1)
    out = np.pad(x.data, widths)
    n = x.data.shape[0]
    return _make(out, (x,), lambda g: (g[before:before + n],))


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = [_wrap(p) for p in parts]
    widths = [p.data.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)

    def vjp(g):
        grads = []
        offset = 0
        for w in widths:
            grads.append(np.ascontiguousarray(g[:, offset:offset + w]))
            offset += w
        return tuple(grads)

    return _make(out, parts, vjp)


def stack_pair(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.data.shape != b.data.shape:
        raise ValueError(
            f"stack_pair shape mismatch: {a.data.shape} vs {b.data.shape}"
        )
    out = np.stack((a.data, b.data))
    return _make(out, (a, b), lambda g: (g[0], g[1]))


def take_plane(x, index: int) -> Tensor:
    """x[index] along axis 0, dropping the axis."""
    x = _wrap(x)
    out = np.ascontiguousarray(x.data[index])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(out, (x,), vjp)


# -- neural primitives -------------------------------------------------------


def softmax_rows(x) -> Tensor:
    """Numerically stable softmax along the last axis of a 2-D tensor."""
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return (y * (g - dot),)

    return _make(y, (x,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-6) -> Tensor:
    """Per-row normalization of [tokens x features] with learnable affine."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    if x.data.ndim != 2:
        raise ValueError(f"layer_norm expects [tokens, features], got {x.data.shape}")
    feats = x.data.shape[1]
    if gain.data.shape != (feats,) or bias.data.shape != (feats,):
        raise ValueError(
            f"gain/bias must have shape ({feats},), got "
            f"{gain.data.shape} / {bias.data.shape}"
        )
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gain.data + bias.data

    def vjp(g):
        g_gain = (g * xhat).sum(axis=0)
        g_bias = g.sum(axis=0)
        g_hat = g * gain.data
        row_mean = g_hat.mean(axis=1, keepdims=True)
        row_proj = (g_hat * xhat).mean(axis=1, keepdims=True)
        g_x = inv_std * (g_hat - row_mean - xhat * row_proj)
        return (g_x, g_gain, g_bias)

    return _make(out, (x, gain, bias), vjp)


def conv2d(x, weight, bias) -> Tensor:
    """3x3 convolution, stride 1, zero padding 1: [Cin,H,W] -> [Cout,H,W]."""
    x, weight, bias = _wrap(x), _wrap(weight), _wrap(bias)
    if x.data.ndim != 3:
        raise ValueError(f"conv2d input must be [C,H,W], got {x.data.shape}")
    if weight.data.ndim != 4 or weight.data.shape[2:] != (3, 3):
        raise ValueError(
            f"conv2d kernel must be [Cout,Cin,3,3], got {weight.data.shape}"
        )
    c_in, h, w = x.data.shape
    c_out = weight.data.shape[0]
    if weight.data.shape[1] != c_in:
        raise ValueError(
            f"kernel expects {weight.data.shape[1]} input channels, image has {c_in}"
        )
    if bias.data.shape != (c_out,):
        raise ValueError(f"bias must have shape ({c_out},), got {bias.data.shape}")

    padded = np.zeros((c_in, h + 2, w + 2))
    padded[:, 1:-1, 1:-1] = x.data
    cols = np.empty((c_in, 3, 3, h, w))
    for dy in range(3):
        for dx in range(3):
            cols[:, dy, dx] = padded[:, dy:dy + h, dx:dx + w]
    out = np.tensordot(weight.data, cols, axes=([1, 2, 3], [0, 1, 2]))
    out += bias.data[:, None, None]

    def vjp(g):
        g_bias = g.sum(axis=(1, 2))
        g_weight = np.tensordot(g, cols, axes=([1, 2], [3, 4]))
        g_cols = np.tensordot(weight.data, g, axes=([0], [0]))
        g_padded = np.zeros((c_in, h + 2, w + 2))
        for dy in range(3):
            for dx in range(3):
                g_padded[:, dy:dy + h, dx:dx + w] += g_cols[:, dy, dx]
        return (np.ascontiguousarray(g_padded[:, 1:-1, 1:-1]), g_weight, g_bias)

    return _make(out, (x, weight, bias), vjp)


def pixel_shuffle(x, factor: int) -> Tensor:
    """Channel-to-space rearrangement [C*r^2, H, W] -> [C, rH, rW].

    Output pixel (r*h+dy, r*w+dx) of channel c reads input channel
    c*r^2 + dy*r + dx at (h, w); with r=1 this is the identity.
    """
    x = _wrap(x)
    if x.data.ndim != 3:
        raise ValueError(f"pixel_shuffle input must be [C,H,W], got {x.data.shape}")
    if factor < 1:
        raise ValueError(f"upscale factor must be >= 1, got {factor}")
    cr2, h, w = x.data.shape
    if cr2 % (factor * factor) != 0:
        raise ValueError(
            f"channel count {cr2} not divisible by factor^2 = {factor * factor}"
        )
    c = cr2 // (factor * factor)
    out = (x.data.reshape(c, factor, factor, h, w)
           .transpose(0, 3, 1, 4, 2)
           .reshape(c, h * factor, w * factor))

    def vjp(g):
        back = (g.reshape(c, h, factor, w, factor)
                .transpose(0, 2, 4, 1, 3)
                .reshape(cr2, h, w))
        return (np.ascontiguousarray(back),)

    return _make(np.ascontiguousarray(out), (x,), vjp)


# -- packed real FFT ----------------------------------------------------------


def rfft_tokens(x) -> tuple[Tensor, Tensor]:
    """Packed half-spectrum of each row of [C, n]: (real, imag) [C, n/2+1]."""
    x = _wrap(x)
    if x.data.ndim != 2:
        raise ValueError(f"rfft_tokens expects [C, n], got {x.data.shape}")
    n = x.data.shape[1]
    spec = _fft.rfft(x.data)
    stacked_data = np.stack((spec.real, spec.imag))
    bins = spec.bins

    def vjp(g):
        cotangent = g[0] + 1j * g[1]
        z = np.zeros(x.data.shape, dtype=np.complex128)
        z[:, :bins] = cotangent
        # Adjoint of the packed forward transform: one unscaled inverse-phase
        # pass over the zero-extended cotangent spectrum.
        return (_fft.fft_complex(np.conj(z)).real,)

    stacked = _make(stacked_data, (x,), vjp)
    return take_plane(stacked, 0), take_plane(stacked, 1)


def irfft_tokens(real, imag, n: int) -> Tensor:
    """Inverse of rfft_tokens: (real, imag) [C, n/2+1] back to [C, n].

    The imaginary plane must be zero at the DC and Nyquist bins, matching
    the packed-spectrum contract.
    """
    stacked = stack_pair(real, imag)
    spec = _fft.PackedSpectrum(
        real=stacked.data[0], imag=stacked.data[1], length=n)
    out = _fft.irfft(spec, n)
    bins = spec.bins

    def vjp(g):
        f = _fft.fft_complex(g.astype(np.complex128))
        g_re = (2.0 / n) * f.real[:, :bins]
        g_im = (2.0 / n) * f.imag[:, :bins]
        g_re[:, 0] *= 0.5
        g_re[:, -1] *= 0.5
        g_im[:, 0] = 0.0
        g_im[:, -1] = 0.0
        return (np.stack((g_re, g_im)),)

    return _make(out, (stacked,), vjp)
