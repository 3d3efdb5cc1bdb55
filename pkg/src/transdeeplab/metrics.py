"""Segmentation metrics: Dice, Hausdorff distance, sensitivity, specificity, accuracy.

Conventions for a class absent from both prediction and truth: Dice 1,
Hausdorff 0. Absent from exactly one side: Dice 0, Hausdorff ``inf``
(counted in ``MetricsReport.hausdorff_inf`` and excluded from averages).
A rate whose denominator is zero is reported as 1.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from . import tensor as T

_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Coordinates [n, 2] of foreground pixels with a 4-neighbour outside the foreground."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=_FOUR_CONNECTED, border_value=0)
    return np.argwhere(mask & ~eroded)


def dice_coefficient(pred: np.ndarray, truth: np.ndarray) -> float:
    pred, truth = np.asarray(pred, bool), np.asarray(truth, bool)
    total = pred.sum() + truth.sum()
    if total == 0:
        return 1.0
    return 2.0 * np.logical_and(pred, truth).sum() / total


def hausdorff_distance(pred: np.ndarray, truth: np.ndarray, percentile: float | None = None) -> float:
    """Symmetric Hausdorff distance between the boundary pixel sets (pixels).

    With ``percentile`` (e.g. 95) the given percentile of the pooled directed
    nearest-boundary distances is returned instead of the maximum.
    """
    pred, truth = np.asarray(pred, bool), np.asarray(truth, bool)
    has_p, has_t = pred.any(), truth.any()
    if not has_p and not has_t:
        return 0.0
    if has_p != has_t:
        return math.inf
    bp, bt = boundary_pixels(pred), boundary_pixels(truth)
    d = cdist(bp, bt)
    forward, backward = d.min(axis=1), d.min(axis=0)
    if percentile is None:
        return float(max(forward.max(), backward.max()))
    return float(np.percentile(np.concatenate([forward, backward]), percentile))


def _rate(num: float, den: float) -> float:
    return 1.0 if den == 0 else num / den


@dataclass
class MetricsReport:
    dice: np.ndarray
    hausdorff: np.ndarray
    hausdorff_inf: np.ndarray
    sensitivity: np.ndarray
    specificity: np.ndarray
    accuracy: np.ndarray

    @property
    def num_classes(self) -> int:
        return len(self.dice)

    @property
    def foreground(self) -> slice:
        return slice(1, None) if self.num_classes > 1 else slice(None)

    @property
    def mean_dice(self) -> float:
        return float(self.dice[self.foreground].mean())

    @property
    def mean_hausdorff(self) -> float:
        hd = self.hausdorff[self.foreground]
        finite = hd[np.isfinite(hd)]
        return float(finite.mean()) if finite.size else math.inf

    @property
    def mean_sensitivity(self) -> float:
        return float(self.sensitivity[self.foreground].mean())

    @property
    def mean_specificity(self) -> float:
        return float(self.specificity[self.foreground].mean())

    @property
    def mean_accuracy(self) -> float:
        return float(self.accuracy[self.foreground].mean())

    def rows(self) -> list[tuple]:
        out = [
            (str(k), self.dice[k], self.hausdorff[k], self.sensitivity[k], self.specificity[k], self.accuracy[k])
            for k in range(self.num_classes)
        ]
        out.append(("mean", self.mean_dice, self.mean_hausdorff, self.mean_sensitivity,
                    self.mean_specificity, self.mean_accuracy))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("class,dice,hausdorff,sensitivity,specificity,accuracy\n")
        for name, *values in self.rows():
            buf.write(name + "," + ",".join(f"{v:.6f}" if math.isfinite(v) else "inf" for v in values) + "\n")
        return buf.getvalue()


def evaluate_masks(preds, truths, num_classes: int, hd_percentile: float | None = None) -> MetricsReport:
    """Per-class metrics over paired label maps.

    Dice and Hausdorff are averaged over images; the confusion-count rates are
    pooled over all pixels. The ``mean`` values cover the foreground classes.
    """
    preds, truths = list(preds), list(truths)
    if not preds or len(preds) != len(truths):
        raise ValueError("need equally many, non-zero predictions and ground truths")
    k = num_classes
    dice = np.zeros((len(preds), k))
    hd = np.zeros((len(preds), k))
    counts = np.zeros((k, 4))  # tp, fp, fn, tn
    for i, (p, t) in enumerate(zip(preds, truths)):
        p, t = np.asarray(p), np.asarray(t)
        if p.shape != t.shape:
            raise ValueError(f"prediction {p.shape} and truth {t.shape} differ")
        for c in range(k):
            pc, tc = p == c, t == c
            dice[i, c] = dice_coefficient(pc, tc)
            hd[i, c] = hausdorff_distance(pc, tc, hd_percentile)
            tp = np.sum(pc & tc)
            fp = np.sum(pc & ~tc)
            fn = np.sum(~pc & tc)
            counts[c] += (tp, fp, fn, pc.size - tp - fp - fn)
    finite = np.isfinite(hd)
    hd_mean = np.array([hd[finite[:, c], c].mean() if finite[:, c].any() else math.inf for c in range(k)])
    tp, fp, fn, tn = counts.T
    return MetricsReport(
        dice=dice.mean(axis=0),
        hausdorff=hd_mean,
        hausdorff_inf=(~finite).sum(axis=0),
        sensitivity=np.array([_rate(tp[c], tp[c] + fn[c]) for c in range(k)]),
        specificity=np.array([_rate(tn[c], tn[c] + fp[c]) for c in range(k)]),
        accuracy=(tp + tn) / counts.sum(axis=1),
    )


def predict_labels(model, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Pixel argmax of the model's logits for a [N, 3, H, W] stack."""
    out = []
    dtype = model.parameters()[0].dtype
    with T.no_grad():
        for start in range(0, len(images), batch_size):
            logits = model(T.Tensor(np.asarray(images[start:start + batch_size], dtype=dtype)))
            out.append(logits.data.argmax(axis=1))
    return np.concatenate(out)


def evaluate(model, samples, hd_percentile: float | None = None, batch_size: int = 8) -> MetricsReport:
    if not samples:
        raise ValueError("evaluate needs at least one sample")
    images = np.stack([s.image for s in samples])
    preds = predict_labels(model, images, batch_size)
    return evaluate_masks(preds, [s.mask for s in samples], model.config.num_classes, hd_percentile)
