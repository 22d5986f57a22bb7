"""Run configuration: defaults, flat ``key = value`` files, and overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # optimisation
    lr: float = 5e-3
    batch_size: int = 1024
    epochs: int = 100
    weight_decay: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    patience: int = 10
    # objective
    contrastive_weight: float = 0.1
    contrastive_temperature: float = 0.5
    contrastive_dropout: float = 0.1
    dropout: float = 0.7
    # sampling
    sampling_p: float = 0.6
    fanouts: tuple[int, ...] = (5, 2)
    # architecture
    hidden: tuple[int, ...] = (128, 64)
    heads: int = 4
    temporal_heads: int = 4
    ffn_mult: int = 2
    t_max: int = 32
    aggregator: str = "attention"
    causal: bool = False
    # neurons
    alpha: float = 1.0
    tau_init: float = 1.0
    vth_init: float = 1.0
    u_reset: float = 0.0
    spike_mode: str = "hard"
    # evaluation
    infer_batch_size: int | None = None
    val_fraction: float = 0.1
    seed: int = 0
    # grid used by the sensitivity study; recorded, never swept automatically
    search_lr: tuple[float, ...] = (1e-3, 3e-3, 5e-3, 7e-3, 1e-2)
    search_dropout: tuple[float, ...] = (0.3, 0.5, 0.7, 0.9)
    search_contrastive_weight: tuple[float, ...] = (0.05, 0.1, 0.2, 0.3)
    search_sampling_p: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    search_hidden: tuple[int, ...] = (64, 128, 256, 512)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("lr", "batch_size", "epochs", "grad_clip", "contrastive_temperature",
                    "heads", "temporal_heads", "ffn_mult", "t_max", "alpha", "patience")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("dropout", "contrastive_dropout", "val_fraction"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not 0.0 <= self.sampling_p <= 1.0:
            raise ConfigError(f"sampling_p must lie in [0, 1], got {self.sampling_p}")
        if self.contrastive_weight < 0 or self.weight_decay < 0:
            raise ConfigError("contrastive_weight and weight_decay must be non-negative")
        if len(self.fanouts) != len(self.hidden):
            raise ConfigError(f"fanouts {self.fanouts} and hidden {self.hidden} differ in length")
        if any(s <= 0 for s in self.fanouts) or any(h <= 0 for h in self.hidden):
            raise ConfigError("fanouts and hidden sizes must be positive")
        for h in self.hidden:
            if h % self.heads:
                raise ConfigError(f"hidden size {h} not divisible by {self.heads} heads")
        if self.hidden[-1] % self.temporal_heads:
            raise ConfigError(
                f"final hidden size {self.hidden[-1]} not divisible by {self.temporal_heads} heads")
        if self.tau_init <= 0.5:
            raise ConfigError("tau_init must exceed 0.5")
        if self.spike_mode not in ("hard", "soft"):
            raise ConfigError(f"spike_mode must be hard or soft, got {self.spike_mode!r}")
        if self.aggregator not in ("attention", "mean", "sum"):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")

    def replace(self, **kw) -> "TrainConfig":
        return dataclasses.replace(self, **kw)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(name: str, raw: str, current):
    """Parse ``raw`` to the type of the field's default value."""
    raw = raw.strip()
    f = next(f for f in fields(TrainConfig) if f.name == name)
    default = f.default if f.default is not dataclasses.MISSING else current
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            elem = type(default[0]) if default else float
            return tuple(elem(x) for x in raw.split(",") if x.strip())
        if default is None:
            return None if raw.lower() == "none" else int(raw)
        return type(default)(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


FIELD_NAMES = frozenset(f.name for f in fields(TrainConfig))


def apply_overrides(cfg: TrainConfig, pairs: dict[str, str]) -> TrainConfig:
    kw = {}
    for key, raw in pairs.items():
        name = key.replace("-", "_")
        if name not in FIELD_NAMES:
            raise ConfigError(f"unknown config key {key!r}")
        kw[name] = _coerce(name, raw, getattr(cfg, name))
    return cfg.replace(**kw)


def parse_config_text(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def load_config(path: str | None = None, overrides: dict[str, str] | None = None,
                base: TrainConfig | None = None) -> TrainConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    cfg = base or TrainConfig()
    if path:
        with open(path) as fh:
            cfg = apply_overrides(cfg, parse_config_text(fh.read()))
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    return cfg
