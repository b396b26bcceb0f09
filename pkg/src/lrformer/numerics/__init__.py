"""Dense-tensor numerics: packed-spectrum FFT, autodiff, and gradient checks."""

from .autodiff import (
    Tensor,
    add,
    col_slice,
    concat_cols,
    conv2d,
    gelu,
    irfft_tokens,
    layer_norm,
    matmul,
    mul,
    no_grad,
    pad_rows,
    parameter,
    pixel_shuffle,
    reshape,
    rfft_tokens,
    row_slice,
    sigmoid,
    softmax_rows,
    stack_pair,
    sub,
    tabs,
    take_plane,
    tmean,
    transpose,
    tsum,
)
from .fft import (
    PackedSpectrum,
    even_odd_parts,
    fft_complex,
    full_spectrum,
    irfft,
    rfft,
    spectrum_energy,
)
from .gradcheck import check_gradients, numerical_gradient

__all__ = [
    "PackedSpectrum",
    "Tensor",
    "add",
    "check_gradients",
    "col_slice",
    "concat_cols",
    "conv2d",
    "even_odd_parts",
    "fft_complex",
    "full_spectrum",
    "gelu",
    "irfft",
    "irfft_tokens",
    "layer_norm",
    "matmul",
    "mul",
    "no_grad",
    "numerical_gradient",
    "pad_rows",
    "parameter",
    "pixel_shuffle",
    "reshape",
    "rfft",
    "rfft_tokens",
    "row_slice",
    "sigmoid",
    "softmax_rows",
    "spectrum_energy",
    "stack_pair",
    "sub",
    "tabs",
    "take_plane",
    "tmean",
    "transpose",
    "tsum",
]
