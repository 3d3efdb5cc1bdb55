"""scikit-learn style wrapper: ``fit`` trains the network, ``predict`` returns label maps."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import tensor as T
from .config import ModelConfig
from .data import Sample
from .metrics import evaluate_masks, predict_labels
from .model import build
from .training import TrainSettings, train
from .validation import check_images, check_masks


class TransDeepLabSegmenter(BaseEstimator):
    """Semantic segmenter over square [n, 3, H, W] image stacks.

    Hyperparameters mirror :class:`~transdeeplab.config.ModelConfig` and
    :class:`~transdeeplab.training.TrainSettings`. ``num_classes=None`` infers
    the class count from the training masks.

    Attributes set by ``fit``: ``model_``, ``config_``, ``n_classes_``,
    ``loss_log_``.
    """

    def __init__(
        self,
        num_classes=None,
        embed_dim=96,
        depths=(2, 2, 6),
        num_heads=(3, 6, 12),
        window_size=7,
        mlp_ratio=4.0,
        sspp_level=2,
        sspp_window_sizes=None,
        fusion="cross_attention",
        decoder_depth=2,
        upsample="expand",
        steps=300,
        batch_size=4,
        base_lr=0.05,
        momentum=0.9,
        weight_decay=1e-4,
        augment=True,
        random_state=0,
    ):
        self.num_classes = num_classes
        self.embed_dim = embed_dim
        self.depths = depths
        self.num_heads = num_heads
        self.window_size = window_size
        self.mlp_ratio = mlp_ratio
        self.sspp_level = sspp_level
        self.sspp_window_sizes = sspp_window_sizes
        self.fusion = fusion
        self.decoder_depth = decoder_depth
        self.upsample = upsample
        self.steps = steps
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.augment = augment
        self.random_state = random_state

    def _make_config(self, img_size: int, n_classes: int) -> ModelConfig:
        return ModelConfig(
            img_size=img_size, num_classes=n_classes, embed_dim=self.embed_dim,
            depths=tuple(self.depths), num_heads=tuple(self.num_heads), window_size=self.window_size,
            mlp_ratio=self.mlp_ratio, sspp_level=self.sspp_level,
            sspp_window_sizes=None if self.sspp_window_sizes is None else tuple(self.sspp_window_sizes),
            fusion=self.fusion, decoder_depth=self.decoder_depth, upsample=self.upsample,
            seed=int(self.random_state),
        )

    def fit(self, X, y):
        X = check_images(X)
        y = check_masks(y, X, self.num_classes)
        if X.shape[2] != X.shape[3]:
            raise ValueError(f"images must be square, got {X.shape[2]}x{X.shape[3]}")
        n_classes = self.num_classes or max(2, int(y.max()) + 1)
        self.config_ = self._make_config(X.shape[2], n_classes)
        self.model_ = build(self.config_)
        settings = TrainSettings(
            steps=self.steps, batch_size=self.batch_size, base_lr=self.base_lr,
            momentum=self.momentum, weight_decay=self.weight_decay, augment=self.augment,
            seed=int(self.random_state),
        )
        samples = [Sample(img, mask) for img, mask in zip(X, y)]
        self.loss_log_ = train(self.model_, samples, settings)
        self.n_classes_ = n_classes
        return self

    def decision_function(self, X) -> np.ndarray:
        """Raw logits [n, K, H, W]."""
        check_is_fitted(self, "model_")
        X = check_images(X)
        with T.no_grad():
            return self.model_(T.Tensor(X)).data

    def predict_proba(self, X) -> np.ndarray:
        logits = self.decision_function(X)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return predict_labels(self.model_, check_images(X))

    def score(self, X, y) -> float:
        """Mean foreground Dice of the predictions."""
        X = check_images(X)
        y = check_masks(y, X)
        return evaluate_masks(self.predict(X), y, self.n_classes_).mean_dice
