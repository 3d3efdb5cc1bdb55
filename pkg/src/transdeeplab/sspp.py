"""Swin spatial pyramid pooling and the cross-contextual attention that fuses it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import tensor as T
from .encoder_decoder import SwinStageOutput
from .nn import Linear, Module
from .swin import SwinBlockPair
from .tensor import ShapeError, Tensor

DEFAULT_WINDOW_SIZES = {1: (7,), 2: (2, 7), 3: (2, 4, 7), 4: (2, 4, 7, 14)}
REDUCTION_RATIO = 4


@dataclass
class PyramidFeatures:
    levels: list
    window_sizes: tuple
    height: int
    width: int

    def __post_init__(self):
        if not 1 <= len(self.levels) <= 4:
            raise ValueError(f"pyramid must have 1..4 levels, got {len(self.levels)}")
        shapes = {lvl.shape for lvl in self.levels}
        if len(shapes) != 1:
            raise ShapeError(f"pyramid levels disagree in shape: {sorted(shapes)}")


@dataclass
class FusedFeatures:
    z_all: Tensor
    w_scale: Tensor
    w_tokens: Tensor
    z_out: Tensor


class SSPP(Module):
    """Parallel Swin block pairs, one per window size, each with its own weights."""

    def __init__(self, dim: int, resolution, num_heads: int, window_sizes: Sequence[int], mlp_ratio, rng):
        super().__init__()
        if not 1 <= len(window_sizes) <= 4:
            raise ValueError(f"SSPP supports 1..4 levels, got {len(window_sizes)}")
        self.window_sizes = tuple(window_sizes)
        self.resolution = tuple(resolution)
        self.branches = []
        for i, m in enumerate(self.window_sizes):
            branch = SwinBlockPair(dim, resolution, num_heads, m, mlp_ratio, rng)
            self.add_module(f"branch{i}", branch)
            self.branches.append(branch)

    def forward(self, x: SwinStageOutput) -> PyramidFeatures:
        if (x.height, x.width) != self.resolution:
            raise ShapeError(f"SSPP built for {self.resolution}, got {x.height}x{x.width}")
        levels = [branch(x.tokens) for branch in self.branches]
        return PyramidFeatures(levels, self.window_sizes, x.height, x.width)


def _mlp_gate(x: Tensor, w_in, b_in, w_out, b_out) -> Tensor:
    return T.sigmoid(T.linear(T.relu(T.linear(x, w_in, b_in)), w_out, b_out))


def scale_attention(z_all: Tensor, w1: Tensor, w2: Tensor, b1: Optional[Tensor] = None, b2: Optional[Tensor] = None):
    """Channel gate from the token-averaged descriptor; returns (w_scale, z_all * w_scale)."""
    if z_all.shape[-1] != w1.shape[0] or w1.shape[1] != w2.shape[0] or w2.shape[1] != z_all.shape[-1]:
        raise ShapeError(f"scale_attention: z_all {z_all.shape} incompatible with W1 {w1.shape}, W2 {w2.shape}")
    descriptor = z_all.mean(axis=1, keepdims=True)  # [B, 1, MC]
    w_scale = _mlp_gate(descriptor, w1, b1, w2, b2)
    return w_scale, z_all * w_scale


def token_attention(z_scaled: Tensor, w3: Tensor, w4: Tensor, b3: Optional[Tensor] = None, b4: Optional[Tensor] = None):
    """Token gate from the channel-averaged descriptor; W4 is applied first, then W3."""
    if w4.shape[0] != 1 or w4.shape[1] != w3.shape[0] or w3.shape[1] != 1:
        raise ShapeError(f"token_attention: W4 {w4.shape} / W3 {w3.shape} must map 1 -> h -> 1")
    descriptor = z_scaled.mean(axis=-1, keepdims=True)  # [B, P, 1]
    w_tokens = _mlp_gate(descriptor, w4, b4, w3, b3)
    return w_tokens, z_scaled * w_tokens


class CrossContextualAttention(Module):
    """Concatenate levels, gate channels then tokens, project back to the level width."""

    def __init__(self, dim: int, num_levels: int, rng, reduction: int = REDUCTION_RATIO):
        super().__init__()
        width = dim * num_levels
        hidden = max(1, width // reduction)
        self.num_levels = num_levels
        # channel gate: W1 (MC -> MC/r), W2 (MC/r -> MC)
        self.scale_fc1 = Linear(width, hidden, rng)
        self.scale_fc2 = Linear(hidden, width, rng)
        # token gate: W4 (1 -> h), W3 (h -> 1)
        self.token_fc4 = Linear(1, hidden, rng)
        self.token_fc3 = Linear(hidden, 1, rng)
        self.proj = Linear(width, dim, rng)

    def attend(self, pyramid: PyramidFeatures) -> FusedFeatures:
        if len(pyramid.levels) != self.num_levels:
            raise ShapeError(f"expected {self.num_levels} pyramid levels, got {len(pyramid.levels)}")
        z_all = T.concat(pyramid.levels, axis=-1)
        w_scale, z1 = scale_attention(z_all, self.scale_fc1.weight, self.scale_fc2.weight,
                                      self.scale_fc1.bias, self.scale_fc2.bias)
        w_tokens, z2 = token_attention(z1, self.token_fc3.weight, self.token_fc4.weight,
                                       self.token_fc3.bias, self.token_fc4.bias)
        return FusedFeatures(z_all, w_scale, w_tokens, z2)

    def forward(self, pyramid: PyramidFeatures) -> SwinStageOutput:
        fused = self.attend(pyramid)
        return SwinStageOutput(self.proj(fused.z_out), pyramid.height, pyramid.width)


class BasicScaleFusion(Module):
    """Concatenate levels and apply one linear layer; the no-attention ablation."""

    def __init__(self, dim: int, num_levels: int, rng):
        super().__init__()
        self.num_levels = num_levels
        self.proj = Linear(dim * num_levels, dim, rng)

    def forward(self, pyramid: PyramidFeatures) -> SwinStageOutput:
        if len(pyramid.levels) != self.num_levels:
            raise ShapeError(f"expected {self.num_levels} pyramid levels, got {len(pyramid.levels)}")
        z_all = T.concat(pyramid.levels, axis=-1)
        return SwinStageOutput(self.proj(z_all), pyramid.height, pyramid.width)


def fuse(pyramid: PyramidFeatures, module: CrossContextualAttention) -> SwinStageOutput:
    return module(pyramid)


def basic_scale_fusion(pyramid: PyramidFeatures, module: BasicScaleFusion) -> SwinStageOutput:
    return module(pyramid)


def identity_projection(module, dim: int) -> None:
    """Set a fusion projection to [I; 0; ...] so level 0 passes through unchanged."""
    w = np.zeros_like(module.proj.weight.data)
    w[:dim, :dim] = np.eye(dim)
    module.proj.weight.data[...] = w
    module.proj.bias.data[...] = 0
