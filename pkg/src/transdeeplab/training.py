"""Sequential SGD training loop over in-memory samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .data import Sample, augment, batch_arrays
from .losses import CE_WEIGHT, DICE_WEIGHT, combined_loss
from .nn import stream_rng
from .optim import SGD, poly_lr


@dataclass
class TrainSettings:
    steps: int = 300
    batch_size: int = 4
    base_lr: float = 0.05
    lr_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    dice_weight: float = DICE_WEIGHT
    ce_weight: float = CE_WEIGHT
    augment: bool = True
    seed: int = 0


@dataclass
class LogRow:
    step: int
    lr: float
    dice_loss: float
    ce_loss: float
    total: float

    def csv(self) -> str:
        return f"{self.step},{self.lr!r},{self.dice_loss!r},{self.ce_loss!r},{self.total!r}"


LOG_HEADER = "step,lr,dice_loss,ce_loss,total"


class BatchStream:
    """Endless shuffled mini-batches; each epoch is a fresh permutation."""

    def __init__(self, samples: list[Sample], batch_size: int, seed: int, use_augment: bool):
        if not samples:
            raise ValueError("no training samples")
        self.samples = samples
        self.batch_size = min(batch_size, len(samples))
        self.order_rng = stream_rng(seed, "shuffle")
        self.augment_rng = stream_rng(seed, "augment")
        self.use_augment = use_augment
        self.epoch = 0
        self._queue: list[int] = []

    def next(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self._queue) < self.batch_size:
            self._queue = list(self.order_rng.permutation(len(self.samples)))
            self.epoch += 1
        picked = [self.samples[i] for i in self._queue[: self.batch_size]]
        self._queue = self._queue[self.batch_size:]
        if self.use_augment:
            picked = [augment(s, self.augment_rng) for s in picked]
        return batch_arrays(picked)


def train_step(model, optimizer: SGD, images, masks, lr, settings: TrainSettings) -> LogRow:
    dtype = model.parameters()[0].dtype
    model.zero_grad()
    logits = model(T.Tensor(np.asarray(images, dtype=dtype)))
    total, dice, ce = combined_loss(logits, masks, settings.dice_weight, settings.ce_weight)
    T.backward(total)
    optimizer.step(lr)
    return LogRow(optimizer.step_count, lr, float(dice.data), float(ce.data), float(total.data))


def train(
    model,
    samples: list[Sample],
    settings: TrainSettings,
    optimizer: Optional[SGD] = None,
    on_step: Optional[Callable[[LogRow, SGD, BatchStream], None]] = None,
) -> list[LogRow]:
    optimizer = optimizer or SGD(model, momentum=settings.momentum, weight_decay=settings.weight_decay)
    stream = BatchStream(samples, settings.batch_size, settings.seed, settings.augment)
    log = []
    for step in range(settings.steps):
        lr = poly_lr(step, settings.steps, settings.base_lr, settings.lr_power)
        images, masks = stream.next()
        row = train_step(model, optimizer, images, masks, lr, settings)
        log.append(row)
        if on_step is not None:
            on_step(row, optimizer, stream)
    return log
