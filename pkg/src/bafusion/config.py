"""Training configuration: a flat key = value text format with strict keys."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .exceptions import ConfigError


@dataclass
class TrainConfig:
    """Desk-scale defaults: 64x64 frames, 16 channels, batch 4, 500 iterations."""

    seed: int = 0
    channels: int = 16
    lr: float = 1e-4
    batch: int = 4
    iters: int = 500
    image_size: int = 64
    eps_gate: float = 1e-4
    eps_norm: float = 1e-5
    jitter_min: float = 0.5
    jitter_max: float = 2.0
    disable_bag: bool = False
    disable_bcl: bool = False
    disable_alternation: bool = False
    data_dir: str | None = None

    def validate(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive; got {self.lr}")
        if self.batch < 1:
            raise ConfigError(f"batch must be >= 1; got {self.batch}")
        if self.iters < 1:
            raise ConfigError(f"iters must be >= 1; got {self.iters}")
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1; got {self.channels}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be >= 8; got {self.image_size}")
        if self.eps_gate <= 0 or self.eps_norm <= 0:
            raise ConfigError("eps_gate and eps_norm must be positive")
        if not (0 < self.jitter_min <= 1.0 <= self.jitter_max):
            raise ConfigError(
                f"jitter range must satisfy 0 < jitter_min <= 1 <= jitter_max; "
                f"got [{self.jitter_min}, {self.jitter_max}]"
            )


_FIELDS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_BOOL_FIELDS = {"disable_bag", "disable_bcl", "disable_alternation"}
_INT_FIELDS = {"seed", "channels", "batch", "iters", "image_size"}
_FLOAT_FIELDS = {"lr", "eps_gate", "eps_norm", "jitter_min", "jitter_max"}


def _parse_value(key: str, raw: str):
    if key in _BOOL_FIELDS:
        lowered = raw.lower()
        if lowered in ("true", "1"):
            return True
        if lowered in ("false", "0"):
            return False
        raise ConfigError(f"{key}: expected true/false; got {raw!r}")
    try:
        if key in _INT_FIELDS:
            return int(raw)
        if key in _FLOAT_FIELDS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: malformed number {raw!r}") from None
    # data_dir: empty means unset
    return raw or None


def parse_config(text: str) -> TrainConfig:
    """Parse key = value lines; unknown keys are errors, order is free."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'; got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw.strip())
    config = TrainConfig(**values)
    config.validate()
    return config


def load_config(path) -> TrainConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def format_config(config: TrainConfig) -> str:
    """Stable round-trippable echo, one key = value per line in field order."""
    lines = []
    for field in dataclasses.fields(TrainConfig):
        value = getattr(config, field.name)
        if field.name in _BOOL_FIELDS:
            text = "true" if value else "false"
        elif value is None:
            text = ""
        else:
            text = repr(value) if isinstance(value, float) else str(value)
        lines.append(f"{field.name} = {text}")
    return "\n".join(lines) + "\n"
