"""Momentum SGD with decoupled weight decay, and polynomial learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import LayerNorm, Module


def poly_lr(step: int, total_steps: int, base_lr: float = 0.05, power: float = 0.9) -> float:
    """base_lr * (1 - step / total_steps) ** power, clamped at 0 past the end."""
    if total_steps <= 0:
        raise ValueError("total_steps must be positive")
    frac = min(max(step / total_steps, 0.0), 1.0)
    return base_lr * (1.0 - frac) ** power


def decay_exempt_names(model: Module) -> set[str]:
    """LayerNorm affines and relative-position bias tables are not decayed."""
    exempt = set()
    for prefix, module in model.named_modules():
        if isinstance(module, LayerNorm):
            for pname in module._params:
                exempt.add(f"{prefix}.{pname}" if prefix else pname)
    for name, _ in model.named_parameters():
        if name.endswith("relative_position_bias_table"):
            exempt.add(name)
    return exempt


@dataclass
class SGD:
    """In-place momentum SGD over a model's named parameters.

    v <- momentum * v + grad;  p <- p - lr * v - lr * weight_decay * p
    """

    model: Module
    momentum: float = 0.9
    weight_decay: float = 1e-4
    step_count: int = 0
    buffers: dict = field(default_factory=dict)

    def __post_init__(self):
        self._exempt = decay_exempt_names(self.model)
        if not self.buffers:
            self.buffers = {n: np.zeros_like(p.data) for n, p in self.model.named_parameters()}

    def step(self, lr: float) -> None:
        for name, p in self.model.named_parameters():
            grad = p.grad
            if grad is None:
                grad = np.zeros_like(p.data)
            buf = self.buffers[name]
            buf *= self.momentum
            buf += grad
            update = lr * buf
            if self.weight_decay and name not in self._exempt:
                update = update + lr * self.weight_decay * p.data
            p.data -= update.astype(p.dtype, copy=False)
        self.step_count += 1

    def state(self) -> dict:
        return {n: b.copy() for n, b in self.buffers.items()}

    def load_state(self, buffers: dict) -> None:
        own = dict(self.model.named_parameters())
        if set(buffers) != set(own):
            raise KeyError("optimizer state names do not match model parameters")
        for name, buf in buffers.items():
            if buf.shape != own[name].shape:
                raise ValueError(f"momentum buffer {name}: shape {buf.shape} != {own[name].shape}")
            self.buffers[name] = np.array(buf, dtype=own[name].dtype)
