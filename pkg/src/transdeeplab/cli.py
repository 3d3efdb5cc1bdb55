"""Command-line entry point.

Exit codes: 0 ok, 1 verification failure, 2 config error, 3 dataset error,
4 class-count mismatch, 5 corrupt checkpoint.
"""

from __future__ import annotations

import dataclasses
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import tensor as T
from .checkpoint import CheckpointShapeError, read_checkpoint, save_checkpoint
from .config import (
    MODEL_FIELD_KINDS,
    ConfigError,
    ModelConfig,
    coerce_fields,
    format_config,
    parse_config_text,
    reference_config,
)
from .data import DatasetError, dataset_num_classes, load_dataset, save_dataset, synth_dataset
from .losses import CE_WEIGHT, DICE_WEIGHT
from .metrics import evaluate, predict_labels
from .model import build, count_params
from .optim import SGD
from .tdl import TDLFormatError, atomic_write_bytes, load_tensor, save_tensor
from .training import LOG_HEADER, TrainSettings, train
from .verify import SUITES, run_suites

log = logging.getLogger("transdeeplab")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_DATASET, EXIT_MISMATCH, EXIT_CORRUPT = 0, 1, 2, 3, 4, 5

RUN_FIELD_KINDS = {
    "dataset_root": "opt_str", "out_dir": "str", "steps": "int", "batch_size": "int",
    "base_lr": "float", "lr_power": "float", "momentum": "float", "weight_decay": "float",
    "dice_weight": "float", "ce_weight": "float", "augment": "bool", "precision": "str",
    "checkpoint_interval": "int", "metrics_path": "opt_str",
}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    dataset_root: Optional[str] = None
    out_dir: str = "runs/default"
    steps: int = 300
    batch_size: int = 4
    base_lr: float = 0.05
    lr_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    dice_weight: float = DICE_WEIGHT
    ce_weight: float = CE_WEIGHT
    augment: bool = True
    precision: str = "f32"
    checkpoint_interval: int = 0
    metrics_path: Optional[str] = None

    def __post_init__(self):
        if self.precision not in ("f32", "f64"):
            raise ConfigError(f"precision must be f32 or f64, got {self.precision!r}", key="precision")
        if self.steps < 0 or self.batch_size < 1 or self.checkpoint_interval < 0:
            raise ConfigError("steps, batch_size and checkpoint_interval must be non-negative (batch_size >= 1)")

    @property
    def seed(self) -> int:
        return self.model.seed

    def settings(self) -> TrainSettings:
        return TrainSettings(
            steps=self.steps, batch_size=self.batch_size, base_lr=self.base_lr, lr_power=self.lr_power,
            momentum=self.momentum, weight_decay=self.weight_decay, dice_weight=self.dice_weight,
            ce_weight=self.ce_weight, augment=self.augment, seed=self.seed,
        )

    def to_text(self) -> str:
        values = self.model.to_dict()
        values.update({k: getattr(self, k) for k in RUN_FIELD_KINDS})
        return format_config(values)

    @classmethod
    def from_text(cls, text: str, require_seed: bool = True) -> "RunConfig":
        parsed = parse_config_text(text)
        kinds = {**MODEL_FIELD_KINDS, **RUN_FIELD_KINDS}
        values = coerce_fields(parsed, kinds)
        if require_seed and "seed" not in values:
            raise ConfigError("seed is mandatory", key="seed")
        model_values = {k: v for k, v in values.items() if k in MODEL_FIELD_KINDS}
        run_values = {k: v for k, v in values.items() if k in RUN_FIELD_KINDS}
        try:
            model = ModelConfig(**model_values)
        except ConfigError as exc:
            if exc.key is not None and exc.key in parsed:
                raise ConfigError(exc.message, line=parsed[exc.key][1], key=exc.key) from None
            raise
        return cls(model=model, **run_values)


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_run_config(path: str, **overrides) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _fail(EXIT_CONFIG, f"cannot read config {path}: {exc}")
    try:
        has_seed = overrides.get("seed") is not None
        cfg = RunConfig.from_text(text, require_seed=not has_seed)
        model_changes = {k: v for k, v in overrides.items() if k in MODEL_FIELD_KINDS and v is not None}
        run_changes = {k: v for k, v in overrides.items() if k in RUN_FIELD_KINDS and v is not None}
        model = dataclasses.replace(cfg.model, **model_changes)
        return dataclasses.replace(cfg, model=model, **run_changes)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, f"{path}: {exc}")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """TransDeepLab segmentation: training, evaluation and verification."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--data", "dataset_root", type=click.Path(), default=None, help="Overrides dataset_root.")
@click.option("--out", "out_dir", type=click.Path(), default=None, help="Overrides out_dir.")
@click.option("--precision", type=click.Choice(["f32", "f64"]), default=None)
def train_cmd(config_path, steps, seed, dataset_root, out_dir, precision):
    """Train from a config file.

    Writes loss_log.csv, checkpoint.tdlc and run.cfg into the output directory,
    plus checkpoint_stepNNNNNN.tdlc every checkpoint_interval steps and a
    metrics table on the training set when metrics_path is set.
    """
    cfg = _load_run_config(config_path, steps=steps, seed=seed, dataset_root=dataset_root,
                           out_dir=out_dir, precision=precision)
    if cfg.dataset_root is None:
        _fail(EXIT_CONFIG, f"{config_path}: key 'dataset_root': no dataset given")
    try:
        samples = load_dataset(cfg.dataset_root)
    except DatasetError as exc:
        _fail(EXIT_DATASET, str(exc))
    if dataset_num_classes(samples) > cfg.model.num_classes:
        _fail(EXIT_MISMATCH, f"{cfg.dataset_root}: labels up to {dataset_num_classes(samples) - 1}, "
                             f"config num_classes is {cfg.model.num_classes}")
    size = cfg.model.img_size
    bad = [s for s in samples if s.mask.shape != (size, size) or s.image.shape[0] != cfg.model.in_channels]
    if bad:
        _fail(EXIT_DATASET, f"{cfg.dataset_root}: samples are {bad[0].image.shape}, config expects "
                            f"[{cfg.model.in_channels}, {size}, {size}]")

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dtype = np.float64 if cfg.precision == "f64" else np.float32
    with T.default_dtype(dtype):
        model = build(cfg.model)
        optimizer = SGD(model, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
        rows = []
        epoch = [0]

        def on_step(row, opt, stream):
            rows.append(row)
            epoch[0] = stream.epoch
            log.info(row.csv())
            if cfg.checkpoint_interval and row.step % cfg.checkpoint_interval == 0:
                save_checkpoint(model, out / f"checkpoint_step{row.step:06d}.tdlc", opt.state(),
                                stream.epoch, cfg.seed)

        train(model, samples, cfg.settings(), optimizer=optimizer, on_step=on_step)
    text = LOG_HEADER + "\n" + "".join(r.csv() + "\n" for r in rows)
    atomic_write_bytes(out / "loss_log.csv", text.encode())
    save_checkpoint(model, out / "checkpoint.tdlc", optimizer.state(), epoch[0], cfg.seed)
    atomic_write_bytes(out / "run.cfg", cfg.to_text().encode())
    if cfg.metrics_path:
        atomic_write_bytes(cfg.metrics_path, evaluate(model, samples).to_csv().encode())
    click.echo(f"trained {len(rows)} steps; final loss {rows[-1].total:.6f}" if rows else "trained 0 steps")


def _read_checkpoint_or_exit(path):
    try:
        return read_checkpoint(path)
    except (TDLFormatError, OSError) as exc:
        _fail(EXIT_CORRUPT, f"corrupt checkpoint {path}: {exc}")


def _model_from_checkpoint(ckpt, path):
    try:
        return ckpt.build_model()
    except (CheckpointShapeError, ConfigError) as exc:
        _fail(EXIT_CORRUPT, f"corrupt checkpoint {path}: {exc}")


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--data", "dataset_root", required=True, type=click.Path())
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write the metrics table here too.")
@click.option("--hd95", is_flag=True, help="Report the 95th-percentile Hausdorff distance.")
def eval_cmd(checkpoint, dataset_root, out_path, hd95):
    """Evaluate a checkpoint; prints per-class and mean metrics as CSV."""
    ckpt = _read_checkpoint_or_exit(checkpoint)
    try:
        samples = load_dataset(dataset_root)
    except DatasetError as exc:
        _fail(EXIT_DATASET, str(exc))
    k = ckpt.config.num_classes
    if dataset_num_classes(samples) > k:
        _fail(EXIT_MISMATCH, f"dataset has labels up to {dataset_num_classes(samples) - 1}, checkpoint predicts {k} classes")
    size = ckpt.config.img_size
    if any(s.mask.shape != (size, size) for s in samples):
        _fail(EXIT_MISMATCH, f"dataset extents differ from checkpoint img_size {size}")
    model = _model_from_checkpoint(ckpt, checkpoint)
    report = evaluate(model, samples, hd_percentile=95 if hd95 else None)
    table = report.to_csv()
    click.echo(table, nl=False)
    if out_path:
        atomic_write_bytes(out_path, table.encode())


@main.command("verify")
@click.option("--suite", "suites", multiple=True, type=click.Choice(sorted(SUITES)),
              help="Run only these suites (repeatable).")
@click.option("--inject-fault", is_flag=True, hidden=True)
def verify_cmd(suites, inject_fault):
    """Run the float64 oracle suites; exit 1 if any check fails."""
    results = run_suites(suites or None, inject_fault=inject_fault)
    for r in results:
        click.echo(r.line())
    failed = sorted({r.suite for r in results if not r.passed})
    if failed:
        click.echo(f"FAILED suites: {', '.join(failed)}")
        sys.exit(EXIT_VERIFY)
    click.echo(f"all {len(results)} checks passed")


@main.command("count-params")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="Model config file; the reference configuration if omitted.")
@click.option("--depth", type=int, default=2, show_default=True, help="Breakdown depth.")
def count_params_cmd(config_path, depth):
    """Print the exact learnable-parameter count and a per-module breakdown."""
    cfg = _load_run_config(config_path, seed=0).model if config_path else reference_config()
    count = count_params(build(cfg), depth=depth)
    click.echo(count.table())


@main.command("synth")
@click.option("--n", "n", type=int, required=True)
@click.option("--height", type=int, required=True)
@click.option("--width", type=int, required=True)
@click.option("--classes", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def synth_cmd(n, height, width, classes, seed, out_dir):
    """Write a synthetic ellipse dataset directory."""
    try:
        samples = synth_dataset(n, height, width, classes, seed)
    except ValueError as exc:
        _fail(EXIT_DATASET, str(exc))
    ids = save_dataset(samples, out_dir)
    click.echo(f"wrote {len(ids)} samples to {out_dir}")


@main.command("predict")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
def predict_cmd(checkpoint, image_path, out_path):
    """Write the argmax label map of one [3, H, W] TDL1 image as a TDL1 tensor."""
    ckpt = _read_checkpoint_or_exit(checkpoint)
    model = _model_from_checkpoint(ckpt, checkpoint)
    try:
        image = load_tensor(image_path)
    except (TDLFormatError, OSError) as exc:
        _fail(EXIT_DATASET, f"{image_path}: {exc}")
    cfg = ckpt.config
    if image.shape != (cfg.in_channels, cfg.img_size, cfg.img_size):
        _fail(EXIT_MISMATCH, f"image {image.shape} does not match checkpoint input "
                             f"[{cfg.in_channels}, {cfg.img_size}, {cfg.img_size}]")
    labels = predict_labels(model, image[None])[0]
    save_tensor(out_path, labels.astype(np.float32))
    click.echo(f"wrote {labels.shape[0]}x{labels.shape[1]} label map to {out_path}")


if __name__ == "__main__":
    main()
