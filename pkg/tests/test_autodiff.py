"""Forward oracles and finite-difference checks for every primitive."""

import numpy as np
import pytest

from lrformer.numerics import (
    Tensor,
    check_gradients,
    col_slice,
    concat_cols,
    conv2d,
    gelu,
    irfft_tokens,
    layer_norm,
    matmul,
    no_grad,
    pad_rows,
    parameter,
    pixel_shuffle,
    reshape,
    rfft_tokens,
    row_slice,
    sigmoid,
    softmax_rows,
    tabs,
    take_plane,
    tmean,
    transpose,
    tsum,
)


# ---------------------------------------------------------------------------
# value oracles
# ---------------------------------------------------------------------------


def test_layer_norm_constant_row_is_zero():
    x = Tensor([[2.0, 2.0, 2.0]])
    out = layer_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3)), eps=1e-12)
    np.testing.assert_allclose(out.data, [[0, 0, 0]], atol=1e-5)


def test_layer_norm_symmetric_two_point():
    x = Tensor([[1.0, 3.0]])
    out = layer_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-6)


def test_layer_norm_matches_scalar_loop():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 9))
    gain, bias, eps = rng.normal(size=9), rng.normal(size=9), 1e-6
    out = layer_norm(Tensor(x), Tensor(gain), Tensor(bias), eps)
    expect = np.empty_like(x)
    for i in range(6):
        mu = sum(x[i]) / 9
        var = sum((v - mu) ** 2 for v in x[i]) / 9
        for j in range(9):
            expect[i, j] = (x[i, j] - mu) / np.sqrt(var + eps) * gain[j] + bias[j]
    np.testing.assert_allclose(out.data, expect, atol=1e-12)


def test_layer_norm_moments():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 16))
    out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)),
                     eps=1e-10).data
    assert np.max(np.abs(out.mean(axis=1))) < 1e-9
    assert np.max(np.abs(out.var(axis=1) - 1.0)) < 1e-6


def test_layer_norm_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        layer_norm(Tensor(np.zeros((2, 2))), Tensor(np.ones(2)),
                   Tensor(np.zeros(2)), eps=0.0)


def test_softmax_symmetry_and_stability():
    out = softmax_rows(Tensor([[0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-15)
    big = softmax_rows(Tensor([[1000.0, 0.0]])).data
    assert np.all(np.isfinite(big))
    assert big[0, 0] > 1 - 1e-12


def test_softmax_matches_extended_precision_oracle():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 7)) * 3
    out = softmax_rows(Tensor(x)).data
    hi = np.exp(x.astype(np.longdouble))
    hi /= hi.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(out, hi.astype(np.float64), atol=1e-14)
    # rows sum to one, entries in (0, 1)
    np.testing.assert_allclose(out.sum(axis=1), np.ones(4), atol=1e-12)
    assert np.all(out > 0) and np.all(out < 1)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 6))
    shifted = x + rng.normal(size=(5, 1))
    a = softmax_rows(Tensor(x)).data
    b = softmax_rows(Tensor(shifted)).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def conv_oracle(x, w, b):
    c_in, h, width = x.shape
    c_out = w.shape[0]
    out = np.zeros((c_out, h, width))
    for co in range(c_out):
        for ci in range(c_in):
            for y in range(h):
                for xx in range(width):
                    for ky in range(3):
                        for kx in range(3):
                            yy, xx2 = y + ky - 1, xx + kx - 1
                            if 0 <= yy < h and 0 <= xx2 < width:
                                out[co, y, xx] += x[ci, yy, xx2] * w[co, ci, ky, kx]
        out[co] += b[co]
    return out


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 5, 5))
    w = np.zeros((2, 2, 3, 3))
    w[0, 0, 1, 1] = 1.0
    w[1, 1, 1, 1] = 1.0
    out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, x, atol=1e-15)


def test_conv2d_all_ones_counts_overlap():
    x = np.ones((1, 5, 5))
    w = np.ones((1, 1, 3, 3))
    out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(1))).data
    assert out[0, 2, 2] == 9.0
    assert out[0, 0, 0] == 4.0
    assert out[0, 0, 2] == 6.0


def test_conv2d_matches_loop_oracle():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(3, 6, 4))
    w = rng.normal(size=(2, 3, 3, 3))
    b = rng.normal(size=2)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b)).data
    np.testing.assert_allclose(out, conv_oracle(x, w, b), atol=1e-12)


def test_conv2d_rejects_channel_mismatch():
    with pytest.raises(ValueError):
        conv2d(Tensor(np.zeros((3, 4, 4))), Tensor(np.zeros((2, 2, 3, 3))),
               Tensor(np.zeros(2)))


def test_pixel_shuffle_identity_when_factor_one():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(3, 4, 4))
    out = pixel_shuffle(Tensor(x), 1)
    np.testing.assert_array_equal(out.data, x)


def test_pixel_shuffle_canonical_layout():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1)
    out = pixel_shuffle(Tensor(x), 2).data
    np.testing.assert_array_equal(out, [[[1.0, 2.0], [3.0, 4.0]]])


def test_pixel_shuffle_is_bijective():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(8, 3, 5))
    out = pixel_shuffle(Tensor(x), 2).data
    # explicit inverse map
    back = np.empty_like(x)
    for c in range(2):
        for dy in range(2):
            for dx in range(2):
                back[c * 4 + dy * 2 + dx] = out[c, dy::2, dx::2]
    np.testing.assert_array_equal(back, x)
    assert sorted(out.reshape(-1)) == sorted(x.reshape(-1))


def test_pixel_shuffle_rejects_indivisible_channels():
    with pytest.raises(ValueError):
        pixel_shuffle(Tensor(np.zeros((3, 2, 2))), 2)


def test_rfft_tokens_matches_plain_rfft():
    from lrformer.numerics import rfft

    rng = np.random.default_rng(8)
    x = rng.normal(size=(3, 16))
    re, im = rfft_tokens(Tensor(x))
    spec = rfft(x)
    np.testing.assert_allclose(re.data, spec.real, atol=1e-12)
    np.testing.assert_allclose(im.data, spec.imag, atol=1e-12)


def test_irfft_tokens_roundtrip():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(4, 32))
    re, im = rfft_tokens(Tensor(x))
    back = irfft_tokens(re, im, 32)
    assert np.max(np.abs(back.data - x)) < 1e-10


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_backward_of_sum_is_ones():
    x = parameter(np.arange(6.0).reshape(2, 3))
    tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3)))


def test_backward_requires_scalar_root():
    x = parameter(np.ones((2, 2)))
    with pytest.raises(ValueError, match="scalar"):
        (x * 2.0).backward()


def test_l1_subgradient_is_sign():
    rng = np.random.default_rng(10)
    x = parameter(rng.normal(size=8))
    y = Tensor(rng.normal(size=8))
    tmean(tabs(x - y)).backward()
    np.testing.assert_allclose(x.grad, np.sign(x.data - y.data) / 8, atol=1e-15)


def test_l1_subgradient_zero_at_ties():
    x = parameter(np.array([1.0, 2.0]))
    y = Tensor(np.array([1.0, 5.0]))
    tmean(tabs(x - y)).backward()
    np.testing.assert_allclose(x.grad, [0.0, -0.5])


def test_grad_accumulates_across_backward_calls():
    x = parameter(np.array([3.0]))
    tsum(x * 2.0).backward()
    tsum(x * 2.0).backward()
    np.testing.assert_allclose(x.grad, [4.0])


def test_no_grad_suppresses_tape():
    x = parameter(np.ones(3))
    with no_grad():
        y = tsum(x * 2.0)
    assert y._parents == ()


@pytest.mark.parametrize("case", [
    "add", "sub_broadcast", "mul_broadcast", "matmul", "mean", "abs",
    "sigmoid", "gelu", "layer_norm", "softmax", "conv2d", "pixel_shuffle",
    "rfft", "irfft", "slices", "concat", "transpose_reshape",
])
def test_finite_difference_per_primitive(case):
    rng = np.random.default_rng(hash(case) % 2**32)

    if case == "add":
        a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=(3, 4)))
        m = Tensor(rng.standard_normal((3, 4)))
        fn = lambda: tsum((a + b) * m)
        leaves = [a, b]
    elif case == "sub_broadcast":
        a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=4))
        fn = lambda: tmean(tabs(a - b))
        leaves = [a, b]
    elif case == "mul_broadcast":
        a, b = parameter(rng.normal(size=(3, 4))), parameter(rng.normal(size=()))
        fn = lambda: tsum(a * sigmoid(b))
        leaves = [a, b]
    elif case == "matmul":
        a, b = parameter(rng.normal(size=(3, 5))), parameter(rng.normal(size=(5, 2)))
        c = Tensor(rng.normal(size=(3, 2)))
        fn = lambda: tsum(matmul(a, b) * c)
        leaves = [a, b]
    elif case == "mean":
        a = parameter(rng.normal(size=(4, 4)))
        fn = lambda: tmean(a * a)
        leaves = [a]
    elif case == "abs":
        a = parameter(rng.normal(size=12) + 0.3)
        fn = lambda: tmean(tabs(a))
        leaves = [a]
    elif case == "sigmoid":
        a = parameter(rng.normal(size=6))
        fn = lambda: tsum(sigmoid(a))
        leaves = [a]
    elif case == "gelu":
        a = parameter(rng.normal(size=10))
        fn = lambda: tmean(gelu(a))
        leaves = [a]
    elif case == "layer_norm":
        a = parameter(rng.normal(size=(4, 6)))
        g = parameter(rng.normal(size=6))
        b = parameter(rng.normal(size=6))
        w = Tensor(rng.normal(size=(4, 6)))
        fn = lambda: tsum(layer_norm(a, g, b) * w)
        leaves = [a, g, b]
    elif case == "softmax":
        a = parameter(rng.normal(size=(3, 5)))
        w = Tensor(rng.normal(size=(3, 5)))
        fn = lambda: tsum(softmax_rows(a) * w)
        leaves = [a]
    elif case == "conv2d":
        x = parameter(rng.normal(size=(2, 5, 4)))
        w = parameter(rng.normal(size=(3, 2, 3, 3)))
        b = parameter(rng.normal(size=3))
        m = Tensor(rng.normal(size=(3, 5, 4)))
        fn = lambda: tsum(conv2d(x, w, b) * m)
        leaves = [x, w, b]
    elif case == "pixel_shuffle":
        x = parameter(rng.normal(size=(8, 2, 3)))
        m = Tensor(rng.normal(size=(2, 4, 6)))
        fn = lambda: tsum(pixel_shuffle(x, 2) * m)
        leaves = [x]
    elif case == "rfft":
        x = parameter(rng.normal(size=(2, 16)))
        mr = Tensor(rng.normal(size=(2, 9)))
        mi = Tensor(rng.normal(size=(2, 9)))

        def fn():
            re, im = rfft_tokens(x)
            return tsum(re * mr) + tsum(im * mi)

        leaves = [x]
    elif case == "irfft":
        re = parameter(rng.normal(size=(2, 9)))
        im_interior = parameter(rng.normal(size=(2, 7)))
        m = Tensor(rng.normal(size=(2, 16)))

        def fn():
            im = transpose(pad_rows(transpose(im_interior), 1, 1))
            return tsum(irfft_tokens(re, im, 16) * m)

        leaves = [re, im_interior]
    elif case == "slices":
        x = parameter(rng.normal(size=(6, 5)))

        def fn():
            a = row_slice(x, 1, 5)
            b = col_slice(a, 0, 3)
            return tmean(pad_rows(b, 2, 1) * 1.7)

        leaves = [x]
    elif case == "concat":
        a = parameter(rng.normal(size=(4, 2)))
        b = parameter(rng.normal(size=(4, 3)))
        m = Tensor(rng.normal(size=(4, 5)))
        fn = lambda: tsum(concat_cols([a, b]) * m)
        leaves = [a, b]
    else:  # transpose_reshape
        x = parameter(rng.normal(size=(3, 8)))
        m = Tensor(rng.normal(size=(4, 6)))
        fn = lambda: tsum(reshape(transpose(x), (4, 6)) * m)
        leaves = [x]

    worst = check_gradients(fn, leaves, rng, num_samples=25)
    assert worst < 1e-4, f"{case}: worst relative error {worst:.2e}"


def test_take_plane_and_stack_gradients():
    rng = np.random.default_rng(42)
    a = parameter(rng.normal(size=(3, 4)))
    b = parameter(rng.normal(size=(3, 4)))

    def fn():
        from lrformer.numerics import stack_pair

        s = stack_pair(a, b)
        return tsum(take_plane(s, 0) * 2.0) + tsum(take_plane(s, 1) * -3.0)

    worst = check_gradients(fn, [a, b], rng, num_samples=10)
    assert worst < 1e-4
