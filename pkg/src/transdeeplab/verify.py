"""Oracle suites: finite-difference gradients, shifted-window brute force, metric references.

Every check runs in float64. ``run_suites`` returns one :class:`CheckResult`
per check; the CLI ``verify`` verb prints them and exits non-zero on failure.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .config import tiny_config
from .gradcheck import gradcheck
from .losses import combined_loss, ce_loss, dice_loss
from .metrics import dice_coefficient, hausdorff_distance
from .model import build
from .oracles import naive_dice, naive_hausdorff, shifted_window_attention_reference
from .sspp import scale_attention, token_attention
from .swin import (
    SwinBlockPair,
    WindowGrid,
    build_shift_mask,
    cyclic_shift,
    effective_window,
    window_attention,
    window_partition,
    window_reverse,
)
from .tensor import Tensor

OP_TOL = 1e-5
COMPOSITE_TOL = 1e-4
ORACLE_TOL = 1e-6
METRIC_TOL = 1e-9


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.suite}/{self.name}: {self.detail}"


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True, dtype=np.float64)


def _corrupted_gelu(x: Tensor) -> Tensor:
    """GELU forward with a deliberately wrong backward rule (negative control)."""
    good = T.gelu(Tensor(x.data))
    return T._result(good.data, (x,), lambda g: (g * 1.5,), "gelu_corrupt")


def op_gradchecks(inject_fault: bool = False) -> list[tuple[str, Callable, list, float]]:
    rng = np.random.default_rng(1234)
    gelu = _corrupted_gelu if inject_fault else T.gelu
    pts = lambda: Tensor(np.array([-2.0, -0.5, 0.5, 2.0]), requires_grad=True)  # noqa: E731
    w = rng.normal(size=(5,))
    ln_target = Tensor(rng.normal(size=(3, 4)))
    shift_target = Tensor(rng.normal(size=(1, 4, 4, 2)))
    checks = [
        ("matmul", lambda a, b: (a @ b).sum(), [_param(rng, 2, 3, 4), _param(rng, 4, 2)], 1e-6),
        ("softmax", lambda x: (T.softmax(x) * Tensor(w)).sum(), [_param(rng, 5)], 1e-6),
        ("layernorm", lambda x, g, b: (T.layernorm(x, g, b) * ln_target).sum(),
         [_param(rng, 3, 4), _param(rng, 4), _param(rng, 4)], OP_TOL),
        ("gelu", lambda x: (gelu(x) * Tensor(np.arange(1.0, 5.0))).sum(), [pts()], OP_TOL),
        ("relu", lambda x: (T.relu(x) * Tensor(np.arange(1.0, 5.0))).sum(), [pts()], OP_TOL),
        ("sigmoid", lambda x: (T.sigmoid(x) * Tensor(np.arange(1.0, 5.0))).sum(), [pts()], OP_TOL),
        ("linear", lambda x, wt, b: (T.linear(x, wt, b) ** 2).sum(),
         [_param(rng, 2, 3, 4), _param(rng, 4, 3), _param(rng, 3)], 1e-6),
        ("reshape_permute", lambda x: (x.reshape(3, 2, 4).permute(2, 0, 1) ** 2).sum(), [_param(rng, 6, 4)], OP_TOL),
        ("concat_split", lambda a, b: sum((p * p * (i + 1)).sum() for i, p in
                                          enumerate(T.split(T.concat([a, b], axis=1), [1, 4], axis=1))),
         [_param(rng, 2, 2), _param(rng, 2, 3)], OP_TOL),
        ("mean_add_mul_scale", lambda a, b: T.scale((a * b + a).mean(axis=0), 3.0).sum() ** 2,
         [_param(rng, 3, 2), _param(rng, 3, 2)], OP_TOL),
        ("partition_reverse",
         lambda x: (window_reverse(window_partition(x, 2), 4, 4, 2) ** 2).sum(), [_param(rng, 1, 4, 4, 2)], 1e-6),
        ("cyclic_shift", lambda x: (cyclic_shift(x, 1) * shift_target).sum(),
         [_param(rng, 1, 4, 4, 2)], OP_TOL),
    ]
    return checks


def _gradcheck_results(checks, suite="gradcheck") -> list[CheckResult]:
    out = []
    for name, f, inputs, tol in checks:
        rep = gradcheck(f, inputs, tol=tol)
        out.append(CheckResult(suite, name, rep.passed, f"max rel err {rep.max_rel_error:.2e} (tol {tol:g})"))
    return out


def suite_gradcheck(inject_fault: bool = False) -> list[CheckResult]:
    with T.default_dtype(np.float64):
        results = _gradcheck_results(op_gradchecks(inject_fault))
        rng = np.random.default_rng(99)

        pair = SwinBlockPair(4, (4, 4), 2, 2, 2.0, np.random.default_rng(5))
        for p in pair.parameters():
            p.data += rng.normal(0, 0.1, size=p.shape)
        x = _param(rng, 1, 16, 4)
        target = Tensor(rng.normal(size=(1, 16, 4)))
        rep = gradcheck(lambda x, *ps: (pair(x) * target).sum(), [x] + pair.parameters(), tol=COMPOSITE_TOL)
        results.append(CheckResult("gradcheck", "swin_block_pair", rep.passed,
                                   f"max rel err {rep.max_rel_error:.2e} over {rep.checked} elements"))

        z = _param(rng, 2, 3, 4)
        w1, w2, w3, w4 = _param(rng, 4, 2), _param(rng, 2, 4), _param(rng, 2, 1), _param(rng, 1, 2)
        tgt = Tensor(rng.normal(size=(2, 3, 4)))

        def fusion_loss(z, w1, w2, w3, w4):
            _, z1 = scale_attention(z, w1, w2)
            _, z2 = token_attention(z1, w3, w4)
            return (z2 * tgt).sum()

        rep = gradcheck(fusion_loss, [z, w1, w2, w3, w4], tol=COMPOSITE_TOL)
        results.append(CheckResult("gradcheck", "cross_contextual_attention", rep.passed,
                                   f"max rel err {rep.max_rel_error:.2e}"))

        logits = _param(rng, 2, 3, 4, 4)
        mask = rng.integers(0, 3, size=(2, 4, 4))
        for name, fn in (("dice_loss", dice_loss), ("ce_loss", ce_loss),
                         ("combined_loss", lambda lg, m: combined_loss(lg, m)[0])):
            rep = gradcheck(lambda lg: fn(lg, mask), [logits], tol=COMPOSITE_TOL)
            results.append(CheckResult("gradcheck", name, rep.passed, f"max rel err {rep.max_rel_error:.2e}"))

        results.append(tiny_model_gradcheck())
    return results


def tiny_model_gradcheck(max_per_input: int = 4, seed: int = 0) -> CheckResult:
    """End-to-end gradient of the mean logit of the tiny model w.r.t. input and every parameter tensor."""
    with T.default_dtype(np.float64):
        model = build(tiny_config(seed=seed))
        rng = np.random.default_rng(seed + 1)
        # move off the symmetric zero initialisation so every path carries gradient
        for p in model.parameters():
            p.data += rng.normal(0, 0.05, size=p.shape)
        img = Tensor(rng.uniform(0, 1, size=(1, 3, 32, 32)), requires_grad=True)
        rep = gradcheck(lambda x, *ps: model(x).mean(), [img] + model.parameters(),
                        tol=COMPOSITE_TOL, max_per_input=max_per_input, seed=seed)
    return CheckResult("gradcheck", "tiny_model", rep.passed,
                       f"max rel err {rep.max_rel_error:.2e} over {rep.checked} sampled elements")


SHIFT_GRIDS = tuple(itertools.product((4, 6, 8), (4, 6, 8), (2, 4)))


def shifted_window_oracle_case(h: int, w: int, window: int, seed: int = 0) -> float:
    """Max |kernel - brute force| for one grid; the window is clamped like a Swin block would."""
    m, s = effective_window(h, w, window)
    rng = np.random.default_rng(seed)
    c, heads = 4, 2
    x = rng.normal(size=(1, h, w, c))
    qkv_w, qkv_b = rng.normal(size=(c, 3 * c)), rng.normal(size=3 * c)
    proj_w, proj_b = rng.normal(size=(c, c)), rng.normal(size=c)
    table = rng.normal(size=((2 * m - 1) ** 2, heads))
    with T.default_dtype(np.float64), T.no_grad():
        y = cyclic_shift(Tensor(x), s)
        y = window_partition(y, m)
        mask = build_shift_mask(WindowGrid(h, w, m, s)) if s else None
        y = window_attention(y, Tensor(qkv_w), Tensor(qkv_b), Tensor(proj_w), Tensor(proj_b),
                             Tensor(table), heads, m, mask=mask)
        y = cyclic_shift(window_reverse(y, h, w, m), -s).data[0]
    ref = shifted_window_attention_reference(x[0], qkv_w, qkv_b, proj_w, proj_b, table, heads, m, s)
    return float(np.abs(y - ref).max())


def suite_mask() -> list[CheckResult]:
    out = []
    for h, w, m in SHIFT_GRIDS:
        err = shifted_window_oracle_case(h, w, m, seed=h * 100 + w * 10 + m)
        out.append(CheckResult("mask", f"H{h}_W{w}_M{m}", err < ORACLE_TOL, f"max abs diff {err:.2e}"))
    return out


def random_mask_pairs(n: int, size: int = 16, seed: int = 0):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        density_a, density_b = rng.uniform(0.05, 0.6, size=2)
        yield rng.random((size, size)) < density_a, rng.random((size, size)) < density_b


def suite_metrics(n: int = 200) -> list[CheckResult]:
    worst_dice = worst_hd = 0.0
    for a, b in random_mask_pairs(n):
        worst_dice = max(worst_dice, abs(dice_coefficient(a, b) - naive_dice(a, b)))
        worst_hd = max(worst_hd, abs(hausdorff_distance(a, b) - naive_hausdorff(a, b)))
    empty = np.zeros((16, 16), bool)
    full = np.ones((16, 16), bool)
    conventions = (
        dice_coefficient(full, full) == 1.0 and hausdorff_distance(full, full) == 0.0
        and dice_coefficient(empty, empty) == 1.0 and hausdorff_distance(empty, empty) == 0.0
        and dice_coefficient(full, empty) == 0.0 and hausdorff_distance(full, empty) == np.inf
    )
    return [
        CheckResult("metrics", "dice_vs_naive", worst_dice < METRIC_TOL, f"max diff {worst_dice:.2e} over {n} pairs"),
        CheckResult("metrics", "hausdorff_vs_naive", worst_hd < METRIC_TOL, f"max diff {worst_hd:.2e} over {n} pairs"),
        CheckResult("metrics", "edge_conventions", conventions, "perfect/empty/one-sided cases"),
    ]


SUITES = {
    "gradcheck": suite_gradcheck,
    "mask": suite_mask,
    "metrics": suite_metrics,
}


def run_suites(names=None, inject_fault: bool = False) -> list[CheckResult]:
    names = list(SUITES) if not names else list(names)
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        if name == "gradcheck":
            results.extend(suite_gradcheck(inject_fault=inject_fault))
        else:
            results.extend(SUITES[name]())
    return results
