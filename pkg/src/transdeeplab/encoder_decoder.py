"""Patch embedding, merging and expanding, plus the encoder and decoder."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module
from .swin import SwinStage
from .tensor import ShapeError, Tensor

PATCH_SIZE = 4


@dataclass
class SwinStageOutput:
    """Token grid [B, H*W, C] together with its spatial extents."""

    tokens: Tensor
    height: int
    width: int

    def __post_init__(self):
        if self.tokens.shape[1] != self.height * self.width:
            raise ShapeError(
                f"{self.tokens.shape[1]} tokens do not fill a {self.height}x{self.width} grid"
            )

    @property
    def channels(self) -> int:
        return self.tokens.shape[-1]


@dataclass
class EncoderOutputs:
    low_level: SwinStageOutput
    mid_level: SwinStageOutput


class PatchEmbed(Module):
    """Split [B, H, W, 3] into 4x4 patches (48 raw values), project to ``embed_dim``, normalize."""

    def __init__(self, embed_dim: int, rng, in_channels: int = 3, patch_size: int = PATCH_SIZE):
        super().__init__()
        self.patch_size = patch_size
        self.raw_dim = patch_size * patch_size * in_channels
        self.proj = Linear(self.raw_dim, embed_dim, rng)
        self.norm = LayerNorm(embed_dim)

    def forward(self, img: Tensor) -> SwinStageOutput:
        b, h, w, c = img.shape
        p = self.patch_size
        if h % p or w % p:
            raise ShapeError(f"image {h}x{w} is not divisible into {p}x{p} patches")
        x = img.reshape(b, h // p, p, w // p, p, c).permute(0, 1, 3, 2, 4, 5)
        x = x.reshape(b, (h // p) * (w // p), p * p * c)
        return SwinStageOutput(self.norm(self.proj(x)), h // p, w // p)


class PatchMerging(Module):
    """Concatenate each 2x2 neighbourhood (4C), normalize, project to 2C without bias."""

    def __init__(self, dim: int, rng):
        super().__init__()
        self.norm = LayerNorm(4 * dim)
        self.reduction = Linear(4 * dim, 2 * dim, rng, bias=False)

    def forward(self, x: SwinStageOutput) -> SwinStageOutput:
        h, w = x.height, x.width
        if h % 2 or w % 2:
            raise ShapeError(f"patch merging needs even extents, got {h}x{w}")
        b, _, c = x.tokens.shape
        # neighbour order (0,0), (1,0), (0,1), (1,1) as (row, col) offsets
        y = x.tokens.reshape(b, h // 2, 2, w // 2, 2, c).permute(0, 1, 3, 4, 2, 5)
        y = y.reshape(b, (h // 2) * (w // 2), 4 * c)
        return SwinStageOutput(self.reduction(self.norm(y)), h // 2, w // 2)


def expanded_dim(dim: int, factor: int) -> int:
    if dim % factor:
        raise ShapeError(f"cannot expand {dim} channels by factor {factor}")
    return dim // factor


class PatchExpanding(Module):
    """Project C -> r*r*C_out, then rearrange each token into an r x r block."""

    def __init__(self, dim: int, factor: int, rng, out_dim: Optional[int] = None):
        super().__init__()
        if factor not in (2, 4):
            raise ValueError(f"expand factor must be 2 or 4, got {factor}")
        self.factor = factor
        self.out_dim = expanded_dim(dim, factor) if out_dim is None else out_dim
        self.expand = Linear(dim, factor * factor * self.out_dim, rng, bias=False)

    def forward(self, x: SwinStageOutput) -> SwinStageOutput:
        b = x.tokens.shape[0]
        h, w, r, c = x.height, x.width, self.factor, self.out_dim
        y = self.expand(x.tokens).reshape(b, h, w, r, r, c).permute(0, 1, 3, 2, 4, 5)
        return SwinStageOutput(y.reshape(b, h * r * w * r, c), h * r, w * r)


@lru_cache(maxsize=None)
def bilinear_matrix(size: int, factor: int) -> np.ndarray:
    """[size*factor, size] interpolation weights, half-pixel centres."""
    out = size * factor
    a = np.zeros((out, size))
    for i in range(out):
        src = min(max((i + 0.5) / factor - 0.5, 0.0), size - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, size - 1)
        frac = src - lo
        a[i, lo] += 1.0 - frac
        a[i, hi] += frac
    a.setflags(write=False)
    return a


def bilinear_upsample(x: SwinStageOutput, factor: int) -> SwinStageOutput:
    b, _, c = x.tokens.shape
    h, w = x.height, x.width
    dtype = x.tokens.dtype
    ah = Tensor(bilinear_matrix(h, factor).astype(dtype))
    aw_t = Tensor(bilinear_matrix(w, factor).T.astype(dtype))
    y = ah @ x.tokens.reshape(b, h, w * c)
    y = y.reshape(b, h * factor, w, c).permute(0, 1, 3, 2) @ aw_t
    y = y.permute(0, 1, 3, 2).reshape(b, h * factor * w * factor, c)
    return SwinStageOutput(y, h * factor, w * factor)


class BilinearUpsample(Module):
    def __init__(self, factor: int):
        super().__init__()
        self.factor = factor

    def forward(self, x: SwinStageOutput) -> SwinStageOutput:
        return bilinear_upsample(x, self.factor)


class Encoder(Module):
    """Patch embedding, a full-resolution stage, then merge + stage for each later level."""

    def __init__(self, config, rng):
        super().__init__()
        c = config.embed_dim
        grid = config.img_size // PATCH_SIZE
        self.patch_embed = PatchEmbed(c, rng, in_channels=config.in_channels)
        self.stages = []
        self.merges = []
        for i, (depth, heads) in enumerate(zip(config.depths, config.num_heads)):
            if i > 0:
                merge = PatchMerging(c, rng)
                self.add_module(f"merge{i}", merge)
                self.merges.append(merge)
                c, grid = 2 * c, grid // 2
            stage = SwinStage(c, (grid, grid), depth, heads, config.window_size, config.mlp_ratio, rng)
            self.add_module(f"stage{i}", stage)
            self.stages.append(stage)
        self.out_dim = c
        self.out_grid = grid

    def forward(self, img: Tensor) -> EncoderOutputs:
        x = self.patch_embed(img)
        x = SwinStageOutput(self.stages[0](x.tokens), x.height, x.width)
        low = x
        for merge, stage in zip(self.merges, self.stages[1:]):
            x = merge(x)
            x = SwinStageOutput(stage(x.tokens), x.height, x.width)
        return EncoderOutputs(low_level=low, mid_level=x)


class Decoder(Module):
    """Upsample fused features to the low-level grid, concatenate, refine, expand to pixels."""

    def __init__(self, config, rng):
        super().__init__()
        low_dim = config.embed_dim
        low_grid = config.img_size // PATCH_SIZE
        mid_dim = config.mid_dim
        self.skip_factor = 2 ** (len(config.depths) - 1)
        dec_dim = config.decoder_dim or low_dim
        if config.upsample == "bilinear":
            self.up = BilinearUpsample(self.skip_factor)
            up_dim = mid_dim
        else:
            self.up = PatchExpanding(mid_dim, self.skip_factor, rng)
            up_dim = self.up.out_dim
        self.fuse_skip = Linear(up_dim + low_dim, dec_dim, rng)
        self.stage = SwinStage(
            dec_dim, (low_grid, low_grid), config.decoder_depth, config.num_heads[0],
            config.window_size, config.mlp_ratio, rng,
        )
        if config.upsample == "bilinear":
            self.final_up = BilinearUpsample(PATCH_SIZE)
            head_dim = dec_dim
        else:
            self.final_up = PatchExpanding(dec_dim, PATCH_SIZE, rng, out_dim=config.final_expand_dim)
            head_dim = self.final_up.out_dim
        self.head = Linear(head_dim, config.num_classes, rng)

    def forward(self, fused: SwinStageOutput, low_level: SwinStageOutput) -> Tensor:
        up = self.up(fused)
        if (up.height, up.width) != (low_level.height, low_level.width):
            raise ShapeError(
                f"upsampled grid {up.height}x{up.width} does not meet low-level grid "
                f"{low_level.height}x{low_level.width}"
            )
        x = T.concat([up.tokens, low_level.tokens], axis=-1)
        x = self.stage(self.fuse_skip(x))
        x = self.final_up(SwinStageOutput(x, low_level.height, low_level.width))
        logits = self.head(x.tokens)
        b, _, k = logits.shape
        return logits.reshape(b, x.height, x.width, k).permute(0, 3, 1, 2)
