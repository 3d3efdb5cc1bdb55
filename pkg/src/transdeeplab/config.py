"""Model configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from typing import Optional

from .encoder_decoder import PATCH_SIZE
from .sspp import DEFAULT_WINDOW_SIZES


class ConfigError(ValueError):
    """Invalid configuration value or unparseable config text.

    ``line`` and ``key`` locate the problem when it came from a file.
    """

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        self.message = message
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


FUSION_MODES = ("cross_attention", "basic")
UPSAMPLE_MODES = ("expand", "bilinear")


@dataclass
class ModelConfig:
    img_size: int = 224
    in_channels: int = 3
    num_classes: int = 9
    embed_dim: int = 96
    depths: tuple = (2, 2, 6)
    num_heads: tuple = (3, 6, 12)
    window_size: int = 7
    mlp_ratio: float = 4.0
    sspp_level: int = 2
    sspp_window_sizes: Optional[tuple] = None
    fusion: str = "cross_attention"
    decoder_depth: int = 2
    decoder_dim: Optional[int] = None
    final_expand_dim: Optional[int] = None
    upsample: str = "expand"
    seed: int = 0

    def __post_init__(self):
        self.depths = tuple(int(d) for d in self.depths)
        self.num_heads = tuple(int(h) for h in self.num_heads)
        if self.sspp_window_sizes is None:
            self.sspp_window_sizes = DEFAULT_WINDOW_SIZES.get(self.sspp_level)
        else:
            self.sspp_window_sizes = tuple(int(m) for m in self.sspp_window_sizes)
        self.validate()

    @property
    def num_stages(self) -> int:
        return len(self.depths)

    @property
    def mid_dim(self) -> int:
        return self.embed_dim * 2 ** (self.num_stages - 1)

    @property
    def mid_grid(self) -> int:
        return self.img_size // (PATCH_SIZE * 2 ** (self.num_stages - 1))

    def validate(self) -> None:
        if len(self.depths) != len(self.num_heads):
            raise ConfigError(
                f"depths {self.depths} and num_heads {self.num_heads} differ in length", key="depths"
            )
        if self.num_stages not in (2, 3):
            raise ConfigError(
                f"need 2 or 3 encoder stages so the skip upsample factor is 2 or 4, got {self.num_stages}",
                key="depths",
            )
        for d in self.depths:
            if d <= 0 or d % 2:
                raise ConfigError(f"every stage depth must be a positive even number, got {d}", key="depths")
        if self.decoder_depth <= 0 or self.decoder_depth % 2:
            raise ConfigError(f"decoder_depth must be positive and even, got {self.decoder_depth}", key="decoder_depth")
        unit = PATCH_SIZE * 2 ** (self.num_stages - 1)
        if self.img_size <= 0 or self.img_size % unit:
            raise ConfigError(f"img_size {self.img_size} must be a positive multiple of {unit}", key="img_size")
        for i, heads in enumerate(self.num_heads):
            dim = self.embed_dim * 2**i
            if heads <= 0 or dim % heads:
                raise ConfigError(f"stage {i} width {dim} not divisible by {heads} heads", key="num_heads")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}", key="num_classes")
        if self.window_size < 1:
            raise ConfigError(f"window_size must be >= 1, got {self.window_size}", key="window_size")
        if self.sspp_level not in DEFAULT_WINDOW_SIZES:
            raise ConfigError(f"sspp_level must be 1..4, got {self.sspp_level}", key="sspp_level")
        if self.sspp_window_sizes is None or len(self.sspp_window_sizes) != self.sspp_level:
            raise ConfigError(
                f"sspp_window_sizes {self.sspp_window_sizes} must list {self.sspp_level} sizes",
                key="sspp_window_sizes",
            )
        if any(m < 1 for m in self.sspp_window_sizes):
            raise ConfigError("sspp window sizes must be >= 1", key="sspp_window_sizes")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}", key="fusion")
        if self.upsample not in UPSAMPLE_MODES:
            raise ConfigError(f"upsample must be one of {UPSAMPLE_MODES}, got {self.upsample!r}", key="upsample")
        if self.mlp_ratio <= 0:
            raise ConfigError(f"mlp_ratio must be positive, got {self.mlp_ratio}", key="mlp_ratio")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ModelConfig":
        if "sspp_level" in changes and "sspp_window_sizes" not in changes:
            changes["sspp_window_sizes"] = None
        return dataclasses.replace(self, **changes)


def tiny_config(**overrides) -> ModelConfig:
    """32x32 input, C=8, two stages, SSPP level 2, binary segmentation."""
    base = dict(
        img_size=32, num_classes=2, embed_dim=8, depths=(2, 2), num_heads=(2, 2),
        window_size=4, sspp_level=2, decoder_depth=2, seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)


def reference_config(**overrides) -> ModelConfig:
    """The default 224x224, C=96 configuration used for parameter-count targets."""
    return ModelConfig(**overrides)


# ---------------------------------------------------------------------------
# flat key = value text
# ---------------------------------------------------------------------------


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def format_config(values: dict) -> str:
    return "".join(f"{k} = {_format_value(v)}\n" for k, v in values.items())


def parse_config_text(text: str) -> dict[str, tuple[str, int]]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns key -> (raw value, line)."""
    out: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=lineno)
        if key in out:
            raise ConfigError("duplicate key", line=lineno, key=key)
        out[key] = (value, lineno)
    return out


def _coerce(raw: str, kind: str, key: str, line: Optional[int]):
    try:
        if raw.lower() == "none":
            if kind.startswith("opt"):
                return None
            raise ValueError("value may not be none")
        kind = kind.removeprefix("opt_")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind == "ints":
            return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(str(exc), line=line, key=key) from None
    raise AssertionError(kind)


MODEL_FIELD_KINDS = {
    "img_size": "int", "in_channels": "int", "num_classes": "int", "embed_dim": "int",
    "depths": "ints", "num_heads": "ints", "window_size": "int", "mlp_ratio": "float",
    "sspp_level": "int", "sspp_window_sizes": "opt_ints", "fusion": "str",
    "decoder_depth": "int", "decoder_dim": "opt_int", "final_expand_dim": "opt_int",
    "upsample": "str", "seed": "int",
}
assert set(MODEL_FIELD_KINDS) == {f.name for f in fields(ModelConfig)}


def coerce_fields(parsed: dict, kinds: dict) -> dict:
    values = {}
    for key, (raw, line) in parsed.items():
        if key not in kinds:
            raise ConfigError("unknown key", line=line, key=key)
        values[key] = _coerce(raw, kinds[key], key, line)
    return values


def model_config_from_text(text: str) -> ModelConfig:
    values = coerce_fields(parse_config_text(text), MODEL_FIELD_KINDS)
    return ModelConfig(**values)


def model_config_to_text(config: ModelConfig) -> str:
    return format_config(config.to_dict())
