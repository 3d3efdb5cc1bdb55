"""Window partitioning, cyclic shifts and (shifted-)window self-attention."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from . import tensor as T
from .nn import LayerNorm, Linear, Module, Parameter
from .tensor import ShapeError, Tensor

# Additive mask value for cross-region pairs; finite so gradients stay finite.
MASK_VALUE = -100.0


@dataclass(frozen=True)
class WindowGrid:
    height: int
    width: int
    window_size: int
    shift: int = 0

    def __post_init__(self):
        if self.height % self.window_size or self.width % self.window_size:
            raise ShapeError(
                f"grid {self.height}x{self.width} is not divisible by window size {self.window_size}"
            )
        if not 0 <= self.shift < self.window_size:
            raise ValueError(f"shift {self.shift} outside [0, {self.window_size})")

    @property
    def num_windows(self) -> int:
        return (self.height // self.window_size) * (self.width // self.window_size)


def effective_window(height: int, width: int, window_size: int) -> tuple[int, int]:
    """Window size and shift actually used on a ``height x width`` grid.

    The requested size is kept when it tiles the grid. Otherwise it is clamped
    to ``min(window_size, height, width)`` and, if that still does not tile,
    lowered to the largest divisor of ``gcd(height, width)`` below it.
    """
    m = window_size
    if height % m or width % m:
        m = min(m, height, width)
        if height % m or width % m:
            g = math.gcd(height, width)
            m = max(d for d in range(1, m + 1) if g % d == 0)
    return m, m // 2


# ---------------------------------------------------------------------------
# layout plumbing
# ---------------------------------------------------------------------------


def window_partition(x: Tensor, window_size: int) -> Tensor:
    """[B, H, W, C] -> [B * nW, M*M, C], windows and tokens both row-major."""
    b, h, w, c = x.shape
    m = window_size
    if h % m or w % m:
        raise ShapeError(f"window_partition: grid {h}x{w} not divisible by window size {m}")
    x = x.reshape(b, h // m, m, w // m, m, c)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b * (h // m) * (w // m), m * m, c)


def window_reverse(windows: Tensor, height: int, width: int, window_size: int) -> Tensor:
    """Inverse of :func:`window_partition`."""
    m = window_size
    if height % m or width % m:
        raise ShapeError(f"window_reverse: grid {height}x{width} not divisible by window size {m}")
    n_w = (height // m) * (width // m)
    total, tokens, c = windows.shape
    if tokens != m * m or total % n_w:
        raise ShapeError(
            f"window_reverse: {windows.shape} inconsistent with grid {height}x{width}, window {m}"
        )
    b = total // n_w
    x = windows.reshape(b, height // m, width // m, m, m, c)
    x = x.permute(0, 1, 3, 2, 4, 5)
    return x.reshape(b, height, width, c)


def cyclic_shift(x: Tensor, shift: int) -> Tensor:
    """Toroidal roll of a [B, H, W, C] grid by (-shift, -shift)."""
    if shift == 0:
        return x
    return T.roll(x, (-shift, -shift), (1, 2))


@lru_cache(maxsize=None)
def relative_position_index(window_size: int) -> np.ndarray:
    """[M*M, M*M] indices into the (2M-1)^2 displacement table."""
    m = window_size
    coords = np.stack(np.meshgrid(np.arange(m), np.arange(m), indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :]
    index = (rel[0] + m - 1) * (2 * m - 1) + (rel[1] + m - 1)
    index.setflags(write=False)
    return index


def region_labels(height: int, width: int, window_size: int, shift: int) -> np.ndarray:
    """Region id of every cell of the shifted grid.

    Cells of the unshifted grid are labelled by the 3x3 slicing with
    boundaries at ``shift`` and ``size - window_size + shift``; the labels
    are then rolled exactly like the features.
    """
    labels = np.zeros((height, width), dtype=np.int64)
    if shift == 0:
        return labels

    def bands(n):
        return (slice(0, shift), slice(shift, n - window_size + shift), slice(n - window_size + shift, n))

    label = 0
    for hs in bands(height):
        for ws in bands(width):
            labels[hs, ws] = label
            label += 1
    return np.roll(labels, (-shift, -shift), axis=(0, 1))


@lru_cache(maxsize=None)
def _shift_mask_array(height: int, width: int, window_size: int, shift: int) -> np.ndarray:
    m = window_size
    labels = region_labels(height, width, m, shift)
    win = labels.reshape(height // m, m, width // m, m).transpose(0, 2, 1, 3).reshape(-1, m * m)
    mask = np.where(win[:, :, None] == win[:, None, :], 0.0, MASK_VALUE)
    mask.setflags(write=False)
    return mask


def build_shift_mask(grid: WindowGrid) -> np.ndarray:
    """[nW, M*M, M*M] additive mask: 0 within a region, ``MASK_VALUE`` across."""
    return _shift_mask_array(grid.height, grid.width, grid.window_size, grid.shift)


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------


def relative_position_bias(table: Tensor, window_size: int) -> Tensor:
    """Gather the per-head [h, M*M, M*M] bias from a [(2M-1)^2, h] table."""
    n = window_size * window_size
    index = relative_position_index(window_size)
    bias = T.take(table, index.reshape(-1))
    return bias.reshape(n, n, table.shape[1]).permute(2, 0, 1)


def window_attention(
    x: Tensor,
    qkv_weight: Tensor,
    qkv_bias: Optional[Tensor],
    proj_weight: Tensor,
    proj_bias: Optional[Tensor],
    bias_table: Tensor,
    num_heads: int,
    window_size: int,
    mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
):
    """Multi-head self-attention inside each window.

    ``x`` is [num_windows_total, M*M, C]. ``mask``, when given, is
    [nW, M*M, M*M] and the leading axis of ``x`` must be a multiple of nW
    (batch-major, as produced by :func:`window_partition`).
    """
    bw, n, c = x.shape
    if c % num_heads:
        raise ShapeError(f"channel count {c} not divisible by {num_heads} heads")
    if n != window_size * window_size:
        raise ShapeError(f"window of {n} tokens does not match window size {window_size}")
    d = c // num_heads
    qkv = T.linear(x, qkv_weight, qkv_bias).reshape(bw, n, 3, num_heads, d).permute(2, 0, 3, 1, 4)
    q, k, v = (t.reshape(bw, num_heads, n, d) for t in T.split(qkv, 3, axis=0))
    logits = T.scale(q @ k.permute(0, 1, 3, 2), 1.0 / math.sqrt(d))
    logits = logits + relative_position_bias(bias_table, window_size)
    if mask is not None:
        n_w = mask.shape[0]
        if bw % n_w:
            raise ShapeError(f"{bw} windows cannot be grouped by a mask over {n_w} windows")
        logits = logits.reshape(bw // n_w, n_w, num_heads, n, n)
        logits = logits + Tensor(mask[None, :, None].astype(logits.dtype))
        logits = logits.reshape(bw, num_heads, n, n)
    weights = T.softmax(logits, axis=-1)
    out = (weights @ v).permute(0, 2, 1, 3).reshape(bw, n, c)
    out = T.linear(out, proj_weight, proj_bias)
    if return_weights:
        return out, weights
    return out


class WindowAttention(Module):
    def __init__(self, dim: int, window_size: int, num_heads: int, rng: np.random.Generator):
        super().__init__()
        if dim % num_heads:
            raise ShapeError(f"channel count {dim} not divisible by {num_heads} heads")
        self.dim = dim
        self.window_size = window_size
        self.num_heads = num_heads
        # bias table starts at zero so initial attention is unbiased
        self.relative_position_bias_table = Parameter(
            np.zeros(((2 * window_size - 1) ** 2, num_heads), dtype=T.get_default_dtype())
        )
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)

    def forward(self, x: Tensor, mask: Optional[np.ndarray] = None, return_weights: bool = False):
        return window_attention(
            x,
            self.qkv.weight,
            self.qkv.bias,
            self.proj.weight,
            self.proj.bias,
            self.relative_position_bias_table,
            self.num_heads,
            self.window_size,
            mask=mask,
            return_weights=return_weights,
        )


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class SwinBlock(Module):
    """One pre-norm transformer block on a fixed token grid.

    ``shifted`` selects SW-MSA (cyclic shift by half the effective window
    plus region mask) instead of plain W-MSA.
    """

    def __init__(
        self,
        dim: int,
        resolution: tuple[int, int],
        num_heads: int,
        window_size: int,
        shifted: bool,
        mlp_ratio: float,
        rng: np.random.Generator,
    ):
        super().__init__()
        h, w = resolution
        m, s = effective_window(h, w, window_size)
        self.dim = dim
        self.resolution = (h, w)
        self.window_size = m
        self.shift = s if shifted else 0
        self.grid = WindowGrid(h, w, m, self.shift)
        self.norm1 = LayerNorm(dim)
        self.attn = WindowAttention(dim, m, num_heads, rng)
        self.norm2 = LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio), rng)

    @property
    def attn_mask(self) -> Optional[np.ndarray]:
        return build_shift_mask(self.grid) if self.shift else None

    def forward(self, x: Tensor) -> Tensor:
        h, w = self.resolution
        b, n, c = x.shape
        if n != h * w:
            raise ShapeError(f"token count {n} does not match grid {h}x{w}")
        y = self.norm1(x).reshape(b, h, w, c)
        y = cyclic_shift(y, self.shift)
        y = window_partition(y, self.window_size)
        y = self.attn(y, mask=self.attn_mask)
        y = window_reverse(y, h, w, self.window_size)
        y = cyclic_shift(y, -self.shift)
        x = x + y.reshape(b, n, c)
        return x + self.mlp(self.norm2(x))


class SwinBlockPair(Module):
    """W-MSA block followed by an SW-MSA block."""

    def __init__(
        self,
        dim: int,
        resolution: tuple[int, int],
        num_heads: int,
        window_size: int,
        mlp_ratio: float,
        rng: np.random.Generator,
    ):
        super().__init__()
        self.block1 = SwinBlock(dim, resolution, num_heads, window_size, False, mlp_ratio, rng)
        self.block2 = SwinBlock(dim, resolution, num_heads, window_size, True, mlp_ratio, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.block2(self.block1(x))


class SwinStage(Module):
    """``depth // 2`` block pairs at one resolution."""

    def __init__(self, dim, resolution, depth, num_heads, window_size, mlp_ratio, rng):
        super().__init__()
        if depth % 2:
            raise ValueError(f"stage depth must be even (block pairs), got {depth}")
        self.pairs = []
        for i in range(depth // 2):
            pair = SwinBlockPair(dim, resolution, num_heads, window_size, mlp_ratio, rng)
            self.add_module(f"pair{i}", pair)
            self.pairs.append(pair)

    def forward(self, x: Tensor) -> Tensor:
        for pair in self.pairs:
            x = pair(x)
        return x
