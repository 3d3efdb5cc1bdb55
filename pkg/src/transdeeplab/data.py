"""Samples, dihedral augmentation, synthetic ellipse datasets and dataset directories."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import stream_rng
from .tdl import TDLFormatError, load_tensor, save_tensor

NOISE_SIGMA = 0.05


class DatasetError(Exception):
    """A dataset directory is missing, incomplete or holds invalid content."""


@dataclass
class Sample:
    image: np.ndarray  # [3, H, W], values in [0, 1]
    mask: np.ndarray  # [H, W] integer labels

    def __post_init__(self):
        if self.image.ndim != 3 or self.mask.ndim != 2 or self.image.shape[1:] != self.mask.shape:
            raise ValueError(f"image {self.image.shape} and mask {self.mask.shape} extents disagree")


# ---------------------------------------------------------------------------
# D4 augmentation: element k = rotate by (k % 4) quarter turns, then mirror if k >= 4
# ---------------------------------------------------------------------------

D4_ORDER = 8


def d4_transform(array: np.ndarray, element: int) -> np.ndarray:
    """Apply a dihedral element to the last two axes."""
    out = np.rot90(array, element % 4, axes=(-2, -1))
    if element >= 4:
        out = np.flip(out, axis=-1)
    return np.ascontiguousarray(out)


def _build_tables():
    probe = np.arange(4).reshape(2, 2)
    images = [d4_transform(probe, k) for k in range(D4_ORDER)]
    lookup = {img.tobytes(): k for k, img in enumerate(images)}
    # compose[a][b]: apply b first, then a
    compose = [[lookup[d4_transform(d4_transform(probe, b), a).tobytes()] for b in range(D4_ORDER)]
               for a in range(D4_ORDER)]
    inverse = [next(b for b in range(D4_ORDER) if compose[a][b] == 0) for a in range(D4_ORDER)]
    return compose, inverse


D4_COMPOSE, D4_INVERSE = _build_tables()


def d4_compose(a: int, b: int) -> int:
    return D4_COMPOSE[a][b]


def d4_inverse(element: int) -> int:
    return D4_INVERSE[element]


def apply_d4(sample: Sample, element: int) -> Sample:
    if sample.mask.shape[0] != sample.mask.shape[1]:
        raise ValueError(f"dihedral augmentation needs square samples, got {sample.mask.shape}")
    return Sample(d4_transform(sample.image, element), d4_transform(sample.mask, element))


def augment(sample: Sample, rng: np.random.Generator) -> Sample:
    """Uniformly random rotation/flip applied identically to image and mask."""
    return apply_d4(sample, int(rng.integers(D4_ORDER)))


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


def class_intensities(num_classes: int) -> np.ndarray:
    return np.linspace(0.1, 0.9, num_classes)


def synth_sample(rng: np.random.Generator, height: int, width: int, num_classes: int) -> Sample:
    mask = np.zeros((height, width), dtype=np.int64)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    for cls in range(1, num_classes):
        cy = rng.uniform(0.25, 0.75) * height
        cx = rng.uniform(0.25, 0.75) * width
        ay = rng.uniform(0.15, 0.35) * height
        ax = rng.uniform(0.15, 0.35) * width
        theta = rng.uniform(0.0, np.pi)
        dy, dx = yy + 0.5 - cy, xx + 0.5 - cx
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        mask[(u / ax) ** 2 + (v / ay) ** 2 <= 1.0] = cls
    clean = class_intensities(num_classes)[mask]
    image = clean[None] + rng.normal(0.0, NOISE_SIGMA, size=(3, height, width))
    return Sample(np.clip(image, 0.0, 1.0).astype(np.float32), mask)


def synth_dataset(n: int, height: int, width: int, num_classes: int, seed: int) -> list[Sample]:
    """``n`` images of ``num_classes - 1`` overlapping filled ellipses on background 0."""
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if n < 1 or height < 4 or width < 4:
        raise ValueError(f"degenerate dataset extents n={n}, {height}x{width}")
    rng = stream_rng(seed, "synth")
    return [synth_sample(rng, height, width, num_classes) for _ in range(n)]


# ---------------------------------------------------------------------------
# dataset directories: <root>/images/<id>.tdl, <root>/masks/<id>.tdl
# ---------------------------------------------------------------------------


def save_dataset(samples, root) -> list[str]:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    for i, s in enumerate(samples):
        sid = f"{i:05d}"
        save_tensor(root / "images" / f"{sid}.tdl", s.image)
        save_tensor(root / "masks" / f"{sid}.tdl", s.mask.astype(np.float32))
        ids.append(sid)
    return ids


def load_dataset(root, num_classes: int | None = None) -> list[Sample]:
    root = Path(root)
    images_dir, masks_dir = root / "images", root / "masks"
    for d in (images_dir, masks_dir):
        if not d.is_dir():
            raise DatasetError(f"missing dataset directory: {d}")
    ids = sorted(p.stem for p in images_dir.glob("*.tdl"))
    if not ids:
        raise DatasetError(f"no .tdl images in {images_dir}")
    samples = []
    for sid in ids:
        mpath = masks_dir / f"{sid}.tdl"
        if not mpath.exists():
            raise DatasetError(f"image {sid} has no mask at {mpath}")
        try:
            image = load_tensor(images_dir / f"{sid}.tdl")
            raw = load_tensor(mpath)
        except (TDLFormatError, OSError) as exc:
            raise DatasetError(f"{sid}: {exc}") from exc
        if not np.all(raw == np.round(raw)):
            raise DatasetError(f"{mpath}: mask labels are not integral")
        mask = raw.astype(np.int64)
        if mask.min() < 0 or (num_classes is not None and mask.max() >= num_classes):
            raise DatasetError(f"{mpath}: labels outside [0, {num_classes})")
        try:
            samples.append(Sample(image, mask))
        except ValueError as exc:
            raise DatasetError(f"{sid}: {exc}") from exc
    return samples


def dataset_num_classes(samples) -> int:
    return int(max(s.mask.max() for s in samples)) + 1


def batch_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    return np.stack([s.image for s in samples]), np.stack([s.mask for s in samples])


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
