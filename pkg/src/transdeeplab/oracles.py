"""Slow, loop-based reference implementations used only for cross-checking.

Nothing here calls into the fast kernels it is meant to check.
"""

from __future__ import annotations

import math

import numpy as np


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def shifted_window_attention_reference(
    x: np.ndarray,
    qkv_weight: np.ndarray,
    qkv_bias: np.ndarray,
    proj_weight: np.ndarray,
    proj_bias: np.ndarray,
    bias_table: np.ndarray,
    num_heads: int,
    window_size: int,
    shift: int,
) -> np.ndarray:
    """Per-token attention over the same-window, same-region peers of a [H, W, C] grid.

    Token p of the unshifted grid sits at ((r - shift) mod H, (c - shift) mod W)
    after the cyclic shift. It may attend to token q iff both land in the same
    M x M window and neither axis separates them across the wrap-around seam.
    Output is returned on the unshifted grid.
    """
    h, w, c = x.shape
    m = window_size
    d = c // num_heads
    tokens = x.reshape(h * w, c)
    qkv = tokens @ qkv_weight + qkv_bias
    q, k, v = qkv[:, :c], qkv[:, c:2 * c], qkv[:, 2 * c:]

    def shifted(p):
        r, col = divmod(p, w)
        return (r - shift) % h, (col - shift) % w

    out = np.zeros_like(tokens)
    for p in range(h * w):
        sr, sc = shifted(p)
        peers = []
        for qi in range(h * w):
            tr, tc = shifted(qi)
            if (sr // m, sc // m) != (tr // m, tc // m):
                continue
            if shift and ((sr >= h - shift) != (tr >= h - shift) or (sc >= w - shift) != (tc >= w - shift)):
                continue
            peers.append((qi, tr, tc))
        head_out = []
        for hd in range(num_heads):
            sl = slice(hd * d, (hd + 1) * d)
            logits = []
            for qi, tr, tc in peers:
                dy = (sr % m) - (tr % m)
                dx = (sc % m) - (tc % m)
                b = bias_table[(dy + m - 1) * (2 * m - 1) + (dx + m - 1), hd]
                logits.append(q[p, sl] @ k[qi, sl] / math.sqrt(d) + b)
            wts = _softmax(np.array(logits))
            head_out.append(sum(wt * v[qi, sl] for wt, (qi, _, _) in zip(wts, peers)))
        out[p] = np.concatenate(head_out)
    out = out @ proj_weight + proj_bias
    return out.reshape(h, w, c)


def naive_dice(pred: np.ndarray, truth: np.ndarray) -> float:
    inter = size_p = size_t = 0
    for a, b in zip(np.asarray(pred, bool).ravel().tolist(), np.asarray(truth, bool).ravel().tolist()):
        inter += a and b
        size_p += a
        size_t += b
    if size_p + size_t == 0:
        return 1.0
    return 2.0 * inter / (size_p + size_t)


def naive_boundary(mask: np.ndarray) -> list[tuple[int, int]]:
    mask = np.asarray(mask, bool)
    h, w = mask.shape
    out = []
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < h and 0 <= cc < w) or not mask[rr, cc]:
                    out.append((r, c))
                    break
    return out


def naive_hausdorff(pred: np.ndarray, truth: np.ndarray) -> float:
    a, b = naive_boundary(pred), naive_boundary(truth)
    if not a and not b:
        return 0.0
    if not a or not b:
        return math.inf

    def directed(src, dst):
        worst = 0.0
        for r, c in src:
            best = min(math.hypot(r - r2, c - c2) for r2, c2 in dst)
            worst = max(worst, best)
        return worst

    return max(directed(a, b), directed(b, a))
