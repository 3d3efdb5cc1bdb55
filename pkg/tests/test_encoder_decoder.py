import numpy as np
import pytest

from transdeeplab.config import reference_config, tiny_config
from transdeeplab.encoder_decoder import (
    Decoder,
    Encoder,
    PatchEmbed,
    PatchExpanding,
    PatchMerging,
    SwinStageOutput,
    bilinear_upsample,
)
from transdeeplab.gradcheck import gradcheck
from transdeeplab.nn import count_parameters
from transdeeplab.tensor import ShapeError, Tensor


def stage(rng, b, h, w, c, dtype=np.float32):
    return SwinStageOutput(Tensor(rng.normal(size=(b, h * w, c)), dtype=dtype), h, w)


def test_patch_embed_token_count():
    embed = PatchEmbed(96, np.random.default_rng(0))
    out = embed(Tensor(np.zeros((1, 224, 224, 3))))
    assert (out.height, out.width, out.tokens.shape) == (56, 56, (1, 3136, 96))


def test_patch_embed_identity_projection_gives_normalized_raw_patches(rng):
    embed = PatchEmbed(48, np.random.default_rng(0))
    embed.proj.weight.data[...] = np.eye(48)
    embed.proj.bias.data[...] = 0
    img = rng.uniform(size=(1, 8, 8, 3)).astype(np.float32)
    out = embed(Tensor(img)).tokens.data[0]
    raw = img[0].reshape(2, 4, 2, 4, 3).transpose(0, 2, 1, 3, 4).reshape(4, 48)
    norm = (raw - raw.mean(-1, keepdims=True)) / np.sqrt(raw.var(-1, keepdims=True) + 1e-5)
    np.testing.assert_allclose(out, norm, atol=1e-5)


def test_patch_embed_rejects_indivisible():
    with pytest.raises(ShapeError):
        PatchEmbed(8, np.random.default_rng(0))(Tensor(np.zeros((1, 6, 8, 3))))


def test_patch_embed_gradcheck(f64, rng):
    embed = PatchEmbed(4, np.random.default_rng(1))
    img = Tensor(rng.uniform(size=(1, 8, 8, 3)), requires_grad=True)
    target = Tensor(rng.normal(size=(1, 4, 4)))
    rep = gradcheck(lambda x, *ps: (embed(x).tokens * target).sum(), [img] + embed.parameters(),
                    tol=1e-4, max_per_input=24)
    assert rep.passed, rep.max_rel_error


def test_patch_merging_shapes_and_count(rng):
    merge = PatchMerging(8, np.random.default_rng(0))
    out = merge(stage(rng, 1, 2, 2, 8))
    assert (out.height, out.width, out.tokens.shape) == (1, 1, (1, 1, 16))
    assert count_parameters(merge) == 4 * 8 * 2 * 8 + 2 * 4 * 8
    for h, w in [(4, 4), (6, 8), (8, 2)]:
        assert merge(stage(rng, 2, h, w, 8)).tokens.shape[1] == h * w // 4
    with pytest.raises(ShapeError):
        merge(stage(rng, 1, 3, 4, 8))


def test_patch_merging_neighbour_order():
    merge = PatchMerging(1, np.random.default_rng(0))
    tokens = np.arange(4.0).reshape(1, 4, 1)  # grid [[0, 1], [2, 3]]
    seen = []

    def record(x):
        seen.append(x.data.copy())
        return x

    merge.norm.forward = record
    merge(SwinStageOutput(Tensor(tokens), 2, 2))
    # (row, col) offsets (0,0), (1,0), (0,1), (1,1)
    np.testing.assert_array_equal(seen[0][0, 0], [0.0, 2.0, 1.0, 3.0])


def test_patch_expanding_shapes(rng):
    expand = PatchExpanding(16, 2, np.random.default_rng(0))
    out = expand(stage(rng, 1, 4, 4, 16))
    assert (out.height, out.width, out.channels) == (8, 8, 8)
    merged = PatchMerging(8, np.random.default_rng(0))(out)
    assert (merged.height, merged.width) == (4, 4)
    big = PatchExpanding(8 * 96, 4, np.random.default_rng(0))
    out = big(SwinStageOutput(Tensor(np.zeros((1, 14 * 14, 8 * 96), np.float32)), 14, 14))
    assert (out.height, out.width, out.channels) == (56, 56, 2 * 96)


def test_patch_expanding_validation():
    with pytest.raises(ValueError):
        PatchExpanding(8, 3, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        PatchExpanding(6, 4, np.random.default_rng(0))


def test_patch_expanding_pixel_layout():
    expand = PatchExpanding(4, 2, np.random.default_rng(0), out_dim=1)
    expand.expand.weight.data[...] = np.eye(4)
    out = expand(SwinStageOutput(Tensor(np.arange(4.0).reshape(1, 1, 4)), 1, 1))
    np.testing.assert_array_equal(out.tokens.data[0, :, 0], [0.0, 1.0, 2.0, 3.0])


def test_patch_expanding_gradcheck(f64, rng):
    expand = PatchExpanding(8, 4, np.random.default_rng(0))
    x = stage(rng, 1, 2, 2, 8, np.float64)
    x.tokens.requires_grad = True
    target = Tensor(rng.normal(size=(1, 64, 2)))
    rep = gradcheck(lambda t, w: (expand(SwinStageOutput(t, 2, 2)).tokens * target).sum(),
                    [x.tokens, expand.expand.weight], tol=1e-4)
    assert rep.passed


def test_bilinear_upsample_preserves_constants():
    x = SwinStageOutput(Tensor(np.full((1, 16, 3), 2.5)), 4, 4)
    out = bilinear_upsample(x, 4)
    assert (out.height, out.width) == (16, 16)
    np.testing.assert_allclose(out.tokens.data, 2.5, rtol=1e-6)


def test_encoder_shapes_tiny(rng):
    enc = Encoder(tiny_config(), np.random.default_rng(0))
    out = enc(Tensor(rng.uniform(size=(2, 32, 32, 3))))
    assert (out.low_level.height, out.low_level.width, out.low_level.channels) == (8, 8, 8)
    assert (out.mid_level.height, out.mid_level.width, out.mid_level.channels) == (4, 4, 16)


def test_encoder_shapes_reference():
    cfg = reference_config()
    assert cfg.mid_grid == 14 and cfg.mid_dim == 4 * 96
    enc = Encoder(cfg, np.random.default_rng(0))
    assert enc.out_grid == 14 and enc.out_dim == 384


def test_encoder_deterministic(rng):
    enc = Encoder(tiny_config(), np.random.default_rng(0))
    img = Tensor(rng.uniform(size=(1, 32, 32, 3)))
    a, b = enc(img), enc(img)
    np.testing.assert_array_equal(a.mid_level.tokens.data, b.mid_level.tokens.data)
    np.testing.assert_array_equal(a.low_level.tokens.data, b.low_level.tokens.data)


def test_decoder_output_extents_and_head_bias(rng):
    cfg = tiny_config()
    dec = Decoder(cfg, np.random.default_rng(0))
    fused, low = stage(rng, 2, 4, 4, 16), stage(rng, 2, 8, 8, 8)
    assert dec(fused, low).shape == (2, 2, 32, 32)
    dec.head.weight.data[...] = 0
    dec.head.bias.data[...] = [0.0, 1.0]
    assert np.all(dec(fused, low).data.argmax(axis=1) == 1)


def test_decoder_grid_mismatch(rng):
    dec = Decoder(tiny_config(), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        dec(stage(rng, 1, 2, 2, 16), stage(rng, 1, 8, 8, 8))


def test_decoder_gradcheck(f64):
    rng = np.random.default_rng(2)
    dec = Decoder(tiny_config(), np.random.default_rng(0))
    for p in dec.parameters():
        p.data += rng.normal(0, 0.05, size=p.shape)
    fused = Tensor(rng.normal(size=(1, 16, 16)), requires_grad=True)
    low = Tensor(rng.normal(size=(1, 64, 8)), requires_grad=True)
    rep = gradcheck(lambda f, l, *ps: dec(SwinStageOutput(f, 4, 4), SwinStageOutput(l, 8, 8)).mean(),
                    [fused, low] + dec.parameters(), tol=1e-4, max_per_input=4)
    assert rep.passed, rep.max_rel_error


def test_bilinear_mode_builds_and_runs(rng):
    cfg = tiny_config(upsample="bilinear")
    dec = Decoder(cfg, np.random.default_rng(0))
    assert dec(stage(rng, 1, 4, 4, 16), stage(rng, 1, 8, 8, 8)).shape == (1, 2, 32, 32)


def test_token_bookkeeping():
    cfg = tiny_config()
    tokens = (cfg.img_size // 4) ** 2
    for _ in cfg.depths[1:]:
        tokens //= 4
    assert tokens == cfg.mid_grid**2
    # decoder: ×skip² to the low-level grid, then ×16 to pixels
    skip = 2 ** (len(cfg.depths) - 1)
    assert cfg.mid_grid**2 * skip**2 * 16 == cfg.img_size**2
