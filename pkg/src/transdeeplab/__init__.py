"""Pure-Transformer DeepLabv3+ style segmentation on a small numpy autodiff core."""

from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .config import ConfigError, ModelConfig, reference_config, tiny_config
from .data import DatasetError, Sample, load_dataset, save_dataset, synth_dataset
from .estimator import TransDeepLabSegmenter
from .gradcheck import gradcheck
from .metrics import MetricsReport, evaluate, evaluate_masks
from .model import TransDeepLab, build, count_params
from .tensor import Tensor, backward, no_grad
from .training import TrainSettings, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DatasetError", "MetricsReport", "ModelConfig", "Sample", "Tensor",
    "TrainSettings", "TransDeepLab", "TransDeepLabSegmenter", "backward", "build",
    "count_params", "evaluate", "evaluate_masks", "gradcheck", "load_checkpoint",
    "load_dataset", "no_grad", "read_checkpoint", "reference_config", "save_checkpoint",
    "save_dataset", "synth_dataset", "tiny_config", "train",
]
