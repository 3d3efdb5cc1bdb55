"""Full segmentation network: encoder -> SSPP -> fusion -> decoder."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

from . import tensor as T
from .config import ModelConfig
from .encoder_decoder import Decoder, Encoder
from .nn import Module, stream_rng
from .sspp import SSPP, BasicScaleFusion, CrossContextualAttention
from .tensor import ShapeError, Tensor


class TransDeepLab(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        rng = stream_rng(config.seed, "init")
        self.encoder = Encoder(config, rng)
        grid = config.mid_grid
        self.sspp = SSPP(
            config.mid_dim, (grid, grid), config.num_heads[-1], config.sspp_window_sizes,
            config.mlp_ratio, rng,
        )
        if config.fusion == "basic":
            self.fusion = BasicScaleFusion(config.mid_dim, config.sspp_level, rng)
        else:
            self.fusion = CrossContextualAttention(config.mid_dim, config.sspp_level, rng)
        self.decoder = Decoder(config, rng)

    def forward(self, img: Tensor) -> Tensor:
        """[B, 3, H, W] image batch -> [B, K, H, W] unnormalized logits."""
        img = T.as_tensor(img)
        cfg = self.config
        if img.ndim != 4 or img.shape[1] != cfg.in_channels or img.shape[2:] != (cfg.img_size, cfg.img_size):
            raise ShapeError(
                f"expected input [B, {cfg.in_channels}, {cfg.img_size}, {cfg.img_size}], got {img.shape}"
            )
        feats = self.encoder(img.permute(0, 2, 3, 1))
        pyramid = self.sspp(feats.mid_level)
        fused = self.fusion(pyramid)
        return self.decoder(fused, feats.low_level)


def build(config: ModelConfig) -> TransDeepLab:
    return TransDeepLab(config)


@dataclass
class ParamCount:
    total: int
    breakdown: "OrderedDict[str, int]"

    def table(self) -> str:
        width = max(len(k) for k in self.breakdown) if self.breakdown else 5
        lines = [f"{name:<{width}}  {n:>12,d}" for name, n in self.breakdown.items()]
        lines.append(f"{'total':<{width}}  {self.total:>12,d}")
        return "\n".join(lines)


def count_params(model: Module, depth: int = 2) -> ParamCount:
    """Exact number of learnable scalars with a breakdown by name prefix.

    ``breakdown`` maps every module path up to ``depth`` components to the
    number of scalars beneath it.
    """
    breakdown: "OrderedDict[str, int]" = OrderedDict()
    total = 0
    for name, p in model.named_parameters():
        total += p.size
        parts = name.split(".")[:-1]
        for i in range(1, min(depth, len(parts)) + 1):
            key = ".".join(parts[:i])
            breakdown[key] = breakdown.get(key, 0) + p.size
    return ParamCount(int(total), breakdown)
