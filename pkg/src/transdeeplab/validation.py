"""Input checks for image stacks and label maps."""

from __future__ import annotations

import numpy as np


def check_images(X, channels: int = 3, dtype=np.float32) -> np.ndarray:
    """Return ``X`` as a float [n, channels, H, W] array of finite values.

    A single [channels, H, W] image is promoted to a batch of one.
    """
    X = np.asarray(X)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != channels:
        raise ValueError(f"expected images shaped [n, {channels}, H, W], got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty image stack")
    if not np.issubdtype(X.dtype, np.number):
        raise TypeError(f"images must be numeric, got dtype {X.dtype}")
    X = X.astype(dtype, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("images contain NaN or infinite values")
    return X


def check_masks(y, X: np.ndarray | None = None, num_classes: int | None = None) -> np.ndarray:
    """Return ``y`` as an int64 [n, H, W] label array matching ``X``."""
    y = np.asarray(y)
    if y.ndim == 2:
        y = y[None]
    if y.ndim != 3:
        raise ValueError(f"expected masks shaped [n, H, W], got {y.shape}")
    if X is not None and (y.shape[0] != X.shape[0] or y.shape[1:] != X.shape[2:]):
        raise ValueError(f"masks {y.shape} do not match images {X.shape}")
    if np.issubdtype(y.dtype, np.floating):
        if not np.all(y == np.round(y)):
            raise ValueError("mask labels must be integral")
    elif not np.issubdtype(y.dtype, np.integer):
        raise TypeError(f"masks must be integer labels, got dtype {y.dtype}")
    y = y.astype(np.int64)
    if y.min() < 0:
        raise ValueError("mask labels must be non-negative")
    if num_classes is not None and y.max() >= num_classes:
        raise ValueError(f"mask label {y.max()} outside [0, {num_classes})")
    return y
