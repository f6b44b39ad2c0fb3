"""Training configuration: every hyperparameter with its default, strict
validation, and a flat ``key = value`` file format (``#`` starts a comment).
Unknown keys are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, fields

from .errors import ConfigError

ABLATIONS = ("full", "no_split", "identity_only", "split_bimamba", "split_wavelet")
FUSIONS = ("gated", "sum", "concat")
BASES = ("haar", "db2")


@dataclass
class TrainConfig:
    channels: int = 256
    split_ratio: float = 0.25
    bimamba_depth: int = 1
    wavelet_levels: int = 1
    wavelet_basis: str = "haar"
    mkconv_k: int = 3
    heads: int = 4
    fusion_strategy: str = "gated"
    dropout: float = 0.1
    lr: float = 8e-4
    weight_decay: float = 1e-4
    batch_size: int = 64
    clip_norm: float = 1.0
    max_epochs: int = 300
    patience: int = 50
    seed: int = 0
    align_length: int = 70
    sync_crop: bool = False
    ablation: str = "full"

    def validate(self) -> "TrainConfig":
        if self.channels < 1:
            raise ConfigError(f"channels must be >= 1, got {self.channels}")
        if not 0.0 < self.split_ratio <= 1.0:
            raise ConfigError(f"split_ratio must be in (0, 1], got {self.split_ratio}")
        if self.bimamba_depth < 1:
            raise ConfigError(f"bimamba_depth must be >= 1, got {self.bimamba_depth}")
        if self.wavelet_levels < 1:
            raise ConfigError(f"wavelet_levels must be >= 1, got {self.wavelet_levels}")
        if self.wavelet_basis not in BASES:
            raise ConfigError(f"wavelet_basis must be one of {BASES}, got {self.wavelet_basis!r}")
        if self.mkconv_k < 1:
            raise ConfigError(f"mkconv_k must be >= 1, got {self.mkconv_k}")
        if self.heads < 1 or self.channels % self.heads != 0:
            raise ConfigError(
                f"heads must divide channels, got heads={self.heads} channels={self.channels}")
        if self.fusion_strategy not in FUSIONS:
            raise ConfigError(
                f"fusion_strategy must be one of {FUSIONS}, got {self.fusion_strategy!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.clip_norm <= 0:
            raise ConfigError(f"clip_norm must be positive, got {self.clip_norm}")
        if self.max_epochs < 0:
            raise ConfigError(f"max_epochs must be >= 0, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.align_length < 4:
            raise ConfigError(f"align_length must be >= 4, got {self.align_length}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f.type for f in fields(TrainConfig)}
_BOOL_TRUE = ("true", "1", "yes", "on")
_BOOL_FALSE = ("false", "0", "no", "off")


def _coerce(key: str, text: str):
    kind = _FIELDS[key]
    if kind == "bool":
        low = text.lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    return text


def config_from_dict(values: dict) -> TrainConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return TrainConfig(**values).validate()


def parse_config_text(text: str) -> TrainConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        if key in values:
            raise ConfigError(f"duplicate config key: {key}")
        values[key] = _coerce(key, val)
    return TrainConfig(**values).validate()


def load_config(path) -> TrainConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def format_config(cfg: TrainConfig) -> str:
    lines = [f"{k} = {str(v).lower() if isinstance(v, bool) else v}"
             for k, v in cfg.to_dict().items()]
    return "\n".join(lines) + "\n"
