"""Soft Dice and cross-entropy objectives for [B, K, H, W] logits."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

DICE_WEIGHT = 0.6
CE_WEIGHT = 0.4
DICE_SMOOTH = 1e-5


def one_hot(mask: np.ndarray, num_classes: int, dtype=np.float32) -> np.ndarray:
    """[B, H, W] integer labels -> [B, K, H, W] indicator array."""
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes}), got range [{mask.min()}, {mask.max()}]")
    out = np.zeros((mask.shape[0], num_classes) + mask.shape[1:], dtype=dtype)
    np.put_along_axis(out, mask[:, None].astype(np.int64), 1.0, axis=1)
    return out


def _check(logits: Tensor, mask: np.ndarray) -> None:
    if logits.ndim != 4 or np.shape(mask) != (logits.shape[0],) + logits.shape[2:]:
        raise ShapeError(f"logits {logits.shape} and mask {np.shape(mask)} disagree")


def dice_loss(logits: Tensor, mask: np.ndarray, smooth: float = DICE_SMOOTH) -> Tensor:
    """Mean over classes of 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s), p = softmax over K."""
    _check(logits, mask)
    k = logits.shape[1]
    target = Tensor(one_hot(mask, k, dtype=logits.dtype))
    probs = T.softmax(logits, axis=1)
    axes = (0, 2, 3)
    intersect = (probs * target).sum(axis=axes)
    denom = probs.sum(axis=axes) + Tensor(target.data.sum(axis=axes)) + smooth
    dice = (T.scale(intersect, 2.0) + smooth) / denom
    return 1.0 - dice.mean()


def ce_loss(logits: Tensor, mask: np.ndarray) -> Tensor:
    """Mean pixelwise cross-entropy."""
    _check(logits, mask)
    target = Tensor(one_hot(mask, logits.shape[1], dtype=logits.dtype))
    logp = T.log_softmax(logits, axis=1)
    per_pixel = (logp * target).sum(axis=1)
    return -per_pixel.mean()


def combined_loss(
    logits: Tensor,
    mask: np.ndarray,
    dice_weight: float = DICE_WEIGHT,
    ce_weight: float = CE_WEIGHT,
):
    """Weighted sum of the two objectives; returns (total, dice, ce)."""
    d = dice_loss(logits, mask)
    c = ce_loss(logits, mask)
    return T.scale(d, dice_weight) + T.scale(c, ce_weight), d, c
