"""Model assembly: shape contracts, composition oracle, counts, gradients."""

import numpy as np
import pytest

from lrformer.gfca import gfca_block
from lrformer.model import (
    ConvParams,
    ModelConfig,
    ModelParams,
    count_parameters,
    forward,
    l1_loss,
    spatial_block,
)
from lrformer.numerics import Tensor, check_gradients, conv2d, pixel_shuffle


def tiny_config(**overrides):
    base = dict(groups=1, blocks_per_group=1, channels=4)
    base.update(overrides)
    return ModelConfig(**base)


def test_zero_parameters_give_constant_output():
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(0))
    for _, t in params.named_parameters():
        t.data[...] = 0.0
    rng = np.random.default_rng(1)
    out = forward(Tensor(rng.random((1, 8, 8))), Tensor(rng.random((1, 8, 8))),
                  params, config)
    assert out.shape == (1, 8, 8)
    np.testing.assert_array_equal(out.data, np.zeros((1, 8, 8)))


@pytest.mark.parametrize("task,factor,expected", [
    ("denoise", 2, (1, 8, 8)),
    ("artifact_removal", 2, (1, 8, 8)),
    ("super_resolve", 2, (1, 16, 16)),
    ("super_resolve", 4, (1, 32, 32)),
])
def test_shape_contract(task, factor, expected):
    config = tiny_config(task=task, scale_factor=factor)
    params = ModelParams.init(config, np.random.default_rng(2))
    rng = np.random.default_rng(3)
    out = forward(Tensor(rng.random((1, 8, 8))), Tensor(rng.random((1, 8, 8))),
                  params, config)
    assert out.shape == expected
    assert np.all(np.isfinite(out.data))


@pytest.mark.parametrize("side", [8, 16, 32])
def test_shape_contract_across_extents(side):
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(4))
    rng = np.random.default_rng(5)
    img = Tensor(rng.random((1, side, side)))
    out = forward(img, Tensor(rng.random((1, side, side))), params, config)
    assert out.shape == (1, side, side)


def test_forward_is_deterministic():
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(6))
    rng = np.random.default_rng(7)
    img = Tensor(rng.random((1, 8, 8)))
    prior = Tensor(rng.random((1, 8, 8)))
    a = forward(img, prior, params, config)
    b = forward(img, prior, params, config)
    np.testing.assert_array_equal(a.data, b.data)


def test_forward_matches_layer_by_layer_composition():
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(8))
    rng = np.random.default_rng(9)
    img = Tensor(rng.random((1, 8, 8)))
    prior = Tensor(rng.random((1, 8, 8)))

    # slow re-composition from the public pieces
    scale = config.attention_scale()
    shallow = conv2d(img, params.embed.weight, params.embed.bias)
    stream = conv2d(prior, params.prior_embed.weight, params.prior_embed.bias)
    x = shallow
    for group in params.groups:
        entry = x
        for block in group.blocks:
            x = gfca_block(x, stream, block, scale=scale, heads=1,
                           adaptive=True)
        x = entry + conv2d(x, group.conv.weight, group.conv.bias)
    enc = shallow + conv2d(x, params.final_conv.weight, params.final_conv.bias)
    expected = conv2d(enc, params.decoder.weight, params.decoder.bias)

    out = forward(img, prior, params, config)
    assert np.max(np.abs(out.data - expected.data)) < 1e-10


def test_sr_decoder_uses_pixel_shuffle_layout():
    config = tiny_config(task="super_resolve", scale_factor=2)
    params = ModelParams.init(config, np.random.default_rng(10))
    rng = np.random.default_rng(11)
    img = Tensor(rng.random((1, 8, 8)))
    prior = Tensor(rng.random((1, 8, 8)))

    scale = config.attention_scale()
    shallow = conv2d(img, params.embed.weight, params.embed.bias)
    stream = conv2d(prior, params.prior_embed.weight, params.prior_embed.bias)
    x = shallow
    for group in params.groups:
        entry = x
        for block in group.blocks:
            x = gfca_block(x, stream, block, scale=scale)
        x = entry + conv2d(x, group.conv.weight, group.conv.bias)
    enc = shallow + conv2d(x, params.final_conv.weight, params.final_conv.bias)
    up = pixel_shuffle(conv2d(enc, params.pre_shuffle.weight,
                              params.pre_shuffle.bias), 2)
    expected = conv2d(up, params.decoder.weight, params.decoder.bias)
    out = forward(img, prior, params, config)
    np.testing.assert_allclose(out.data, expected.data, atol=1e-10)


def test_forward_validates_prior():
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(12))
    img = Tensor(np.zeros((1, 8, 8)))
    with pytest.raises(ValueError, match="prior"):
        forward(img, None, params, config)
    with pytest.raises(ValueError, match="prior"):
        forward(img, Tensor(np.zeros((1, 4, 4))), params, config)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(groups=0)
    with pytest.raises(ValueError):
        ModelConfig(task="sharpen")
    with pytest.raises(ValueError):
        ModelConfig(task="super_resolve", scale_factor=3)
    with pytest.raises(ValueError):
        ModelConfig(attention="spatial", prior="cross", channels=16)
    with pytest.raises(ValueError):
        ModelConfig(heads=3, channels=16)


def test_l1_loss():
    assert l1_loss(Tensor(np.ones(4)), Tensor(np.ones(4))).item() == 0.0
    assert l1_loss(Tensor([1.0, 3.0]), Tensor([0.0, 0.0])).item() == 2.0
    rng = np.random.default_rng(13)
    a, b = rng.normal(size=(3, 5)), rng.normal(size=(3, 5))
    expect = sum(abs(x - y) for x, y in zip(a.reshape(-1), b.reshape(-1))) / 15
    assert l1_loss(Tensor(a), Tensor(b)).item() == pytest.approx(expect, abs=1e-12)
    with pytest.raises(ValueError):
        l1_loss(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


def test_single_conv_parameter_count():
    conv = ConvParams.init(1, 1, np.random.default_rng(14))
    assert sum(t.data.size for _, t in conv.named_parameters()) == 10


def gfca_block_count(c):
    # six projections + mixup gate + two LN pairs + two-layer MLP
    return 6 * c * c + 1 + 4 * c + (c * 4 * c + 4 * c) + (4 * c * c + c)


def spatial_block_count(c):
    return 3 * c * c + 4 * c + (c * 4 * c + 4 * c) + (4 * c * c + c)


def conv_count(c_in, c_out):
    return c_out * c_in * 9 + c_out


def test_gfca_params_closed_form_count():
    p = ModelParams.init(tiny_config(), np.random.default_rng(15))
    block = p.groups[0].blocks[0]
    assert sum(t.data.size for _, t in block.named_parameters()) == \
        gfca_block_count(4) == 261


def test_full_count_matches_closed_form():
    for n, m, c in [(1, 1, 4), (2, 2, 16)]:
        config = ModelConfig(groups=n, blocks_per_group=m, channels=c)
        params = ModelParams.init(config, np.random.default_rng(16))
        expected = (conv_count(1, c) * 2  # embed + prior embed
                    + n * (m * gfca_block_count(c) + conv_count(c, c))
                    + conv_count(c, c) + conv_count(c, 1))
        assert count_parameters(params) == expected


def test_count_monotone_in_each_dimension():
    base = count_parameters(
        ModelParams.init(ModelConfig(groups=2, blocks_per_group=2, channels=8),
                         np.random.default_rng(17)))
    for kwargs in (dict(groups=3, blocks_per_group=2, channels=8),
                   dict(groups=2, blocks_per_group=3, channels=8),
                   dict(groups=2, blocks_per_group=2, channels=12)):
        bigger = count_parameters(
            ModelParams.init(ModelConfig(**kwargs), np.random.default_rng(17)))
        assert bigger > base


def test_end_to_end_gradients():
    config = tiny_config()
    params = ModelParams.init(config, np.random.default_rng(18))
    rng = np.random.default_rng(19)
    img = Tensor(rng.random((1, 8, 8)))
    prior = Tensor(rng.random((1, 8, 8)))
    target = Tensor(rng.random((1, 8, 8)))
    leaves = [t for _, t in params.named_parameters()]

    def loss():
        return l1_loss(forward(img, prior, params, config), target)

    worst = check_gradients(loss, leaves, rng, num_samples=30)
    assert worst < 1e-4, f"worst relative error {worst:.2e}"


def test_spatial_baseline_forward_and_gradients():
    config = ModelConfig(groups=1, blocks_per_group=1, channels=4,
                         attention="spatial", prior="none")
    params = ModelParams.init(config, np.random.default_rng(20))
    rng = np.random.default_rng(21)
    img = Tensor(rng.random((1, 8, 8)))
    out = forward(img, None, params, config)
    assert out.shape == (1, 8, 8)
    target = Tensor(rng.random((1, 8, 8)))
    leaves = [t for _, t in params.named_parameters()]

    def loss():
        return l1_loss(forward(img, None, params, config), target)

    assert check_gradients(loss, leaves, rng, num_samples=20) < 1e-4


def test_multiply_prior_fusion_runs():
    config = ModelConfig(groups=1, blocks_per_group=1, channels=4,
                         attention="spatial", prior="multiply")
    params = ModelParams.init(config, np.random.default_rng(22))
    rng = np.random.default_rng(23)
    out = forward(Tensor(rng.random((1, 8, 8))), Tensor(rng.random((1, 8, 8))),
                  params, config)
    assert out.shape == (1, 8, 8)
    # prior-embed bias starts at one so the gate is near identity
    np.testing.assert_array_equal(params.prior_embed.bias.data, np.ones(4))


def test_spatial_block_standalone():
    rng = np.random.default_rng(24)
    from lrformer.model import SpatialBlockParams

    params = SpatialBlockParams.init(4, rng)
    f = Tensor(rng.normal(size=(4, 4, 4)))
    out = spatial_block(f, params, scale=0.5)
    assert out.shape == (4, 4, 4)
