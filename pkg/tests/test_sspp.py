import numpy as np
import pytest

from transdeeplab import tensor as T
from transdeeplab.encoder_decoder import SwinStageOutput
from transdeeplab.gradcheck import gradcheck
from transdeeplab.nn import count_parameters, zero_parameters
from transdeeplab.sspp import (
    SSPP,
    BasicScaleFusion,
    CrossContextualAttention,
    PyramidFeatures,
    basic_scale_fusion,
    fuse,
    identity_projection,
    scale_attention,
    token_attention,
)
from transdeeplab.tensor import ShapeError, Tensor


def pyramid(rng, levels, b=2, h=4, w=4, c=8):
    return PyramidFeatures([Tensor(rng.normal(size=(b, h * w, c))) for _ in range(levels)],
                           tuple(range(2, 2 + levels)), h, w)


def zero_gates(module):
    for lin in (module.scale_fc1, module.scale_fc2, module.token_fc3, module.token_fc4):
        zero_parameters(lin)


def test_sspp_levels_and_shapes(rng):
    one = SSPP(8, (4, 4), 2, (7,), 2.0, np.random.default_rng(0))
    x = SwinStageOutput(Tensor(rng.normal(size=(1, 16, 8))), 4, 4)
    out = one(x)
    assert len(out.levels) == 1
    np.testing.assert_array_equal(out.levels[0].data, one.branches[0](x.tokens).data)
    two = SSPP(8, (14, 14), 2, (2, 7), 2.0, np.random.default_rng(0))
    out = two(SwinStageOutput(Tensor(rng.normal(size=(1, 196, 8))), 14, 14))
    assert [lvl.shape for lvl in out.levels] == [(1, 196, 8)] * 2
    assert [b.block1.window_size for b in two.branches] == [2, 7]


def test_sspp_zero_branches_are_identity(rng):
    sspp = SSPP(8, (4, 4), 2, (2, 4, 7), 2.0, np.random.default_rng(0))
    zero_parameters(sspp)
    x = SwinStageOutput(Tensor(rng.normal(size=(1, 16, 8))), 4, 4)
    for level in sspp(x).levels:
        np.testing.assert_array_equal(level.data, x.tokens.data)


def test_sspp_rejects_wrong_grid_and_level_count(rng):
    sspp = SSPP(8, (4, 4), 2, (2, 7), 2.0, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        sspp(SwinStageOutput(Tensor(rng.normal(size=(1, 64, 8))), 8, 8))
    with pytest.raises(ValueError):
        SSPP(8, (4, 4), 2, (1, 2, 3, 4, 5), 2.0, np.random.default_rng(0))


def test_scale_attention_zero_mlp(rng):
    z = Tensor(rng.normal(size=(2, 5, 6)))
    w_scale, z1 = scale_attention(z, Tensor(np.zeros((6, 2))), Tensor(np.zeros((2, 6))),
                                  Tensor(np.zeros(2)), Tensor(np.zeros(6)))
    assert np.all(w_scale.data == 0.5)
    np.testing.assert_array_equal(z1.data, 0.5 * z.data)


def test_scale_attention_hand_example(f64):
    z = Tensor(np.array([[[2.0, 0.0], [4.0, 0.0]]]))
    w_scale, z1 = scale_attention(z, Tensor(np.eye(2)), Tensor(np.eye(2)))
    # GAP [3, 0] -> ReLU [3, 0] -> sigmoid [0.95257, 0.5]
    np.testing.assert_allclose(w_scale.data[0, 0], [0.9526, 0.5], atol=1e-4)
    np.testing.assert_allclose(z1.data[0], [[1.9051, 0.0], [3.8103, 0.0]], atol=1e-4)


def test_scale_attention_token_permutation(rng):
    z = rng.normal(size=(1, 6, 4))
    w1, w2 = Tensor(rng.normal(size=(4, 2))), Tensor(rng.normal(size=(2, 4)))
    perm = rng.permutation(6)
    ws, z1 = scale_attention(Tensor(z), w1, w2)
    ws_p, z1_p = scale_attention(Tensor(z[:, perm]), w1, w2)
    np.testing.assert_allclose(ws_p.data, ws.data, atol=1e-6)
    np.testing.assert_allclose(z1_p.data, z1.data[:, perm], atol=1e-6)


def test_token_attention_zero_mlp_and_zero_token(rng):
    z = rng.normal(size=(1, 4, 6))
    z[0, 2] = 0.0
    w_tokens, z2 = token_attention(Tensor(z), Tensor(np.zeros((3, 1))), Tensor(np.zeros((1, 3))))
    assert np.all(w_tokens.data == 0.5)
    np.testing.assert_array_equal(z2.data, 0.5 * z)
    w_tokens, _ = token_attention(Tensor(z), Tensor(rng.normal(size=(3, 1))), Tensor(rng.normal(size=(1, 3))))
    assert w_tokens.data[0, 2, 0] == 0.5


def test_gate_shape_errors(rng):
    z = Tensor(rng.normal(size=(1, 4, 6)))
    with pytest.raises(ShapeError):
        scale_attention(z, Tensor(np.zeros((5, 2))), Tensor(np.zeros((2, 6))))
    with pytest.raises(ShapeError):
        token_attention(z, Tensor(np.zeros((3, 1))), Tensor(np.zeros((2, 3))))


def test_gates_gradcheck(f64, rng):
    z = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    ws = [Tensor(rng.normal(size=s), requires_grad=True) for s in [(4, 2), (2, 4), (2, 1), (1, 2)]]
    tgt = Tensor(rng.normal(size=(2, 3, 4)))

    def loss(z, w1, w2, w3, w4):
        _, z1 = scale_attention(z, w1, w2)
        return (token_attention(z1, w3, w4)[1] * tgt).sum()

    assert gradcheck(loss, [z] + ws, tol=1e-4).passed


def test_fused_identity_and_gate_range(rng):
    cca = CrossContextualAttention(8, 3, np.random.default_rng(0))
    for p in cca.parameters():
        p.data += rng.normal(0, 0.5, size=p.shape).astype(p.dtype)
    fused = cca.attend(pyramid(rng, 3))
    assert fused.w_scale.shape == (2, 1, 24) and fused.w_tokens.shape == (2, 16, 1)
    for gate in (fused.w_scale.data, fused.w_tokens.data):
        assert np.all((gate > 0) & (gate < 1))
    np.testing.assert_allclose(fused.z_out.data, fused.w_tokens.data * fused.w_scale.data * fused.z_all.data,
                               atol=1e-7)


@pytest.mark.parametrize("levels", [1, 2, 3, 4])
def test_fuse_grid_extents(rng, levels):
    cca = CrossContextualAttention(8, levels, np.random.default_rng(0))
    out = fuse(pyramid(rng, levels), cca)
    assert (out.height, out.width, out.tokens.shape) == (4, 4, (2, 16, 8))


def test_fuse_equals_step_by_step(f64, rng):
    cca = CrossContextualAttention(8, 2, np.random.default_rng(0))
    for p in cca.parameters():
        p.data += rng.normal(0, 0.3, size=p.shape)
    pyr = pyramid(rng, 2)
    z_all = np.concatenate([lvl.data for lvl in pyr.levels], axis=-1)
    _, z1 = scale_attention(Tensor(z_all), cca.scale_fc1.weight, cca.scale_fc2.weight,
                            cca.scale_fc1.bias, cca.scale_fc2.bias)
    _, z2 = token_attention(z1, cca.token_fc3.weight, cca.token_fc4.weight, cca.token_fc3.bias, cca.token_fc4.bias)
    expected = T.linear(z2, cca.proj.weight, cca.proj.bias).data
    np.testing.assert_allclose(fuse(pyr, cca).tokens.data, expected, atol=1e-7)


def test_fuse_single_level_zero_gates(rng):
    # both gates sit at exactly 0.5, so an identity projection returns 0.25 * x
    cca = CrossContextualAttention(8, 1, np.random.default_rng(0))
    zero_gates(cca)
    identity_projection(cca, 8)
    pyr = pyramid(rng, 1)
    out = fuse(pyr, cca)
    assert out.tokens.shape == pyr.levels[0].shape
    np.testing.assert_allclose(out.tokens.data, 0.25 * pyr.levels[0].data, rtol=1e-6)


def test_basic_scale_fusion(rng):
    basic = BasicScaleFusion(8, 1, np.random.default_rng(0))
    identity_projection(basic, 8)
    pyr = pyramid(rng, 1)
    np.testing.assert_array_equal(basic_scale_fusion(pyr, basic).tokens.data, pyr.levels[0].data)
    for m in (1, 2, 3, 4):
        assert count_parameters(BasicScaleFusion(8, m, np.random.default_rng(0))) == m * 8 * 8 + 8


def test_basic_differs_from_cross_attention(rng):
    pyr = pyramid(rng, 2)
    basic = BasicScaleFusion(8, 2, np.random.default_rng(0))
    cca = CrossContextualAttention(8, 2, np.random.default_rng(0))
    assert not np.allclose(basic(pyr).tokens.data, cca(pyr).tokens.data)


def test_pyramid_validation(rng):
    with pytest.raises(ShapeError):
        PyramidFeatures([Tensor(np.zeros((1, 4, 2))), Tensor(np.zeros((1, 4, 3)))], (2, 4), 2, 2)
    with pytest.raises(ValueError):
        PyramidFeatures([], (), 2, 2)
    cca = CrossContextualAttention(8, 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        cca(pyramid(rng, 3))
