"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class GradcheckReport:
    max_rel_error: float
    tol: float
    checked: int
    worst_input: int = -1
    worst_index: tuple = ()
    errors: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < self.tol)

    def __bool__(self) -> bool:
        return self.passed


def relative_error(analytic: float, numeric: float, floor: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def gradcheck(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-5,
    tol: float = 1e-5,
    floor: float = 1e-4,
    max_per_input: Optional[int] = None,
    seed: int = 0,
) -> GradcheckReport:
    """Compare ``backward`` against (f(x+eps) - f(x-eps)) / 2eps element by element.

    ``f(*inputs)`` must return a scalar. All inputs must be float64. The
    relative error of an element is ``|a - n| / max(|a|, |n|, floor)``;
    ``floor`` keeps elements whose true gradient is exactly 0 (e.g. a key bias,
    which shifts a whole softmax row) from dividing rounding noise by noise.
    ``max_per_input`` checks a seeded random subset of each input's elements
    instead of all of them.
    """
    for i, x in enumerate(inputs):
        if x.dtype != np.float64:
            raise TypeError(f"gradcheck needs float64 inputs; input {i} is {x.dtype}")
    for x in inputs:
        x.grad = None
        x.requires_grad = True
    loss = f(*inputs)
    if loss.size != 1:
        raise T.ShapeError(f"gradcheck: f must return a scalar, got shape {loss.shape}")
    T.backward(loss)
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    rng = np.random.default_rng(seed)
    report = GradcheckReport(0.0, tol, 0)
    with T.no_grad():
        for i, x in enumerate(inputs):
            flat = x.data.reshape(-1)
            indices = np.arange(flat.size)
            if max_per_input is not None and flat.size > max_per_input:
                indices = np.sort(rng.choice(flat.size, size=max_per_input, replace=False))
            for j in indices:
                orig = flat[j]
                flat[j] = orig + eps
                f_plus = float(f(*inputs).data)
                flat[j] = orig - eps
                f_minus = float(f(*inputs).data)
                flat[j] = orig
                numeric = (f_plus - f_minus) / (2 * eps)
                err = relative_error(float(analytic[i].reshape(-1)[j]), numeric, floor)
                report.errors.append(err)
                report.checked += 1
                if not err <= report.max_rel_error:
                    report.max_rel_error = err
                    report.worst_input = i
                    report.worst_index = np.unravel_index(j, x.shape)
    for x in inputs:
        x.grad = None
    return report
