"""Radix-2 real FFT with a packed half-spectrum representation.

A real signal of even length n is fully described by the n/2 + 1 complex
bins X[0..n/2]: conjugate symmetry gives X[n-m] = conj(X[m]) for the rest.
The DC bin (m=0) and the Nyquist bin (m=n/2) are purely real, which is what
makes the packing lossless. Lengths are restricted to powers of two so a
single iterative radix-2 kernel covers every transform in the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# Tolerance for the "DC/Nyquist purely real" check on externally built
# spectra. rfft itself writes exact zeros there.
_IMAG_BIN_TOL = 1e-12


def _require_pow2(n: int) -> None:
    if n < 2 or (n & (n - 1)) != 0:
        raise ValueError(
            f"signal length must be a power of two >= 2, got {n}"
        )


@lru_cache(maxsize=None)
def _bitrev_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.setflags(write=False)
    return rev


@lru_cache(maxsize=None)
def _stage_twiddles(step: int, inverse: bool) -> np.ndarray:
    k = np.arange(step // 2)
    sign = 2j if inverse else -2j
    w = np.exp(sign * np.pi * k / step)
    w.setflags(write=False)
    return w


def fft_complex(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey DFT along the last axis.

    Vectorized over all leading axes; `inverse=True` applies the conjugate
    twiddles and the 1/n scale.
    """
    a = np.asarray(a, dtype=np.complex128)
    n = a.shape[-1]
    _require_pow2(n)
    out = a[..., _bitrev_indices(n)]
    step = 2
    while step <= n:
        half = step // 2
        w = _stage_twiddles(step, inverse)
        grouped = out.reshape(out.shape[:-1] + (n // step, step))
        even = grouped[..., :half]
        odd = grouped[..., half:] * w
        out = np.concatenate((even + odd, even - odd), axis=-1)
        out = out.reshape(out.shape[:-2] + (n,))
        step *= 2
    if inverse:
        out = out / n
    return out


@dataclass
class PackedSpectrum:
    """Half spectrum of a real signal: bins 0..n/2 as real/imag planes.

    `real` and `imag` have shape [..., n/2 + 1]; `length` is the original
    signal length n (even). The imaginary plane is identically zero at the
    DC and Nyquist bins.
    """

    real: np.ndarray
    imag: np.ndarray
    length: int

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ValueError(
                f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}"
            )
        if self.length % 2 != 0:
            raise ValueError(f"signal length must be even, got {self.length}")
        want = self.length // 2 + 1
        if self.real.shape[-1] != want:
            raise ValueError(
                f"expected {want} bins for length {self.length}, "
                f"got {self.real.shape[-1]}"
            )

    @property
    def bins(self) -> int:
        return self.real.shape[-1]


def rfft(signal: np.ndarray) -> PackedSpectrum:
    """Forward real FFT to the packed half spectrum.

    Accepts any shape [..., n] with n a power of two; the transform runs
    along the last axis.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = x.shape[-1]
    _require_pow2(n)
    full = fft_complex(x)
    bins = n // 2 + 1
    real = np.ascontiguousarray(full.real[..., :bins])
    imag = np.ascontiguousarray(full.imag[..., :bins])
    # Exact zeros at DC/Nyquist: both bins are sums of real values.
    imag[..., 0] = 0.0
    imag[..., -1] = 0.0
    return PackedSpectrum(real=real, imag=imag, length=n)


def full_spectrum(spectrum: PackedSpectrum) -> np.ndarray:
    """Hermitian extension of the packed bins to the full complex spectrum."""
    n = spectrum.length
    bins = spectrum.bins
    full = np.zeros(spectrum.real.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :bins] = spectrum.real + 1j * spectrum.imag
    mid = spectrum.real[..., 1:-1] + 1j * spectrum.imag[..., 1:-1]
    full[..., bins:] = np.conj(mid[..., ::-1])
    return full


def irfft(spectrum: PackedSpectrum, n: int) -> np.ndarray:
    """Inverse of rfft: packed half spectrum back to a real signal of length n."""
    if spectrum.length != n or spectrum.bins != n // 2 + 1:
        raise ValueError(
            f"spectrum has {spectrum.bins} bins for length {spectrum.length}, "
            f"cannot invert to length {n}"
        )
    _require_pow2(n)
    for bin_idx, name in ((0, "DC"), (-1, "Nyquist")):
        worst = np.max(np.abs(spectrum.imag[..., bin_idx]))
        if worst > _IMAG_BIN_TOL:
            raise ValueError(
                f"{name} bin must be purely real for a real signal "
                f"(|imag| = {worst:.3e})"
            )
    out = fft_complex(full_spectrum(spectrum), inverse=True)
    return np.ascontiguousarray(out.real)


def even_odd_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Circularly symmetric / anti-symmetric decomposition along the last axis.

    The symmetric part transforms to a purely real spectrum, the
    anti-symmetric part to a purely imaginary one.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    reflected = x[..., (n - np.arange(n)) % n]
    even = 0.5 * (x + reflected)
    odd = 0.5 * (x - reflected)
    return even, odd


def spectrum_energy(spectrum: PackedSpectrum) -> np.ndarray:
    """Signal energy sum(x^2) computed from the packed bins.

    Interior bins count twice (they stand for a conjugate pair); the result
    has the spectrum's leading shape.
    """
    power = spectrum.real**2 + spectrum.imag**2
    interior = power[..., 1:-1].sum(axis=-1)
    return (power[..., 0] + power[..., -1] + 2.0 * interior) / spectrum.length
