"""Experiment configuration as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored.  Unknown keys are rejected.
Lists are comma separated; ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

from .models import MODEL_KINDS, RECONSTRUCTION_MODES

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "KEY_DOCS",
    "PRESETS",
    "preset",
    "parse_config",
    "load_config",
    "dump_config",
    "apply_overrides",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # threat field
    pool_count: int = 200
    grid_side: int = 20
    horizon: int = 4
    n_p: int = 4
    sigma1: float = 0.25
    sigma2: float = 0.0
    dt: float = 0.01
    shared_dynamics: bool = True
    # datasets
    n_d: int = 25
    n_s: int = 200
    support_seed_offset: int = 1000
    # training
    models: list = field(default_factory=lambda: list(MODEL_KINDS))
    epochs: int = 200
    batch_size: int = 10
    learning_rate: float = 1e-3
    clip_norm: float | None = 5.0
    support_fraction: float | None = None
    reconstruction: str = "sum"
    # evaluation
    n_generated: int = 500
    pca_k: int = 3
    # seeding
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2])

    def validate(self) -> "ExperimentConfig":
        positive = ("pool_count", "grid_side", "horizon", "n_p", "batch_size", "pca_k")
        for key in positive:
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        for key in ("n_d", "n_s", "epochs", "n_generated"):
            if getattr(self, key) < 0:
                raise ConfigError(f"{key} must be non-negative, got {getattr(self, key)}")
        if self.sigma1 < 0 or self.sigma2 < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.n_d > self.pool_count:
            raise ConfigError(f"n_d={self.n_d} exceeds pool_count={self.pool_count}")
        unknown = [m for m in self.models if m not in MODEL_KINDS]
        if unknown:
            raise ConfigError(f"unknown model kinds {unknown}; choose from {list(MODEL_KINDS)}")
        if self.reconstruction not in RECONSTRUCTION_MODES:
            raise ConfigError(f"reconstruction must be one of {list(RECONSTRUCTION_MODES)}")
        if self.support_fraction is not None and not 0 <= self.support_fraction < 1:
            raise ConfigError("support_fraction must lie in [0, 1)")
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        return self


KEY_DOCS = {
    "pool_count": "number of data in the simulated pool (200)",
    "grid_side": "observation grid is grid_side x grid_side (20)",
    "horizon": "observations per datum, T (4)",
    "n_p": "number of radial basis functions, N_P (4)",
    "sigma1": "process noise standard deviation (0.25)",
    "sigma2": "measurement noise standard deviation (0)",
    "dt": "integration step; must divide 1 (0.01)",
    "shared_dynamics": "one dynamics matrix for the whole pool (true)",
    "n_d": "training data drawn from the pool, N_D (25)",
    "n_s": "noiseless support data, N_S (200)",
    "support_seed_offset": "support data use seed + offset (1000)",
    "models": "models to train, comma separated (svae,vrnn,svrnn)",
    "epochs": "training epochs (200)",
    "batch_size": "mini-batch size (10)",
    "learning_rate": "Adam step size (0.001)",
    "clip_norm": "global gradient-norm clip; none disables (5)",
    "support_fraction": "share of each epoch drawn from support data; none = joint shuffle (none)",
    "reconstruction": "squared error per datum: sum or mean over grid points (sum)",
    "n_generated": "samples generated per model for evaluation (500)",
    "pca_k": "principal components in the report (3)",
    "seed": "seed for single-run commands (0)",
    "seeds": "seeds for run-experiment, comma separated (0,1,2)",
}

PRESETS = {
    "paper-desk": {},
    "paper-full": {"grid_side": 100, "pool_count": 500, "n_d": 50, "n_s": 500},
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return dataclasses.replace(ExperimentConfig(), **PRESETS[name])


_HINTS = get_type_hints(ExperimentConfig)


def _convert(key: str, raw: str):
    hint = _HINTS[key]
    text = raw.strip()
    optional = "None" in str(hint)
    if optional and text.lower() == "none":
        return None
    try:
        if key == "models":
            return [t.strip() for t in text.split(",") if t.strip()]
        if key == "seeds":
            return [int(t) for t in text.split(",") if t.strip()]
        if hint is bool:
            if text.lower() in ("true", "yes", "1"):
                return True
            if text.lower() in ("false", "no", "0"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is str:
            return text
        return float(text)
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for {key}") from None


def apply_overrides(cfg: ExperimentConfig, pairs: dict) -> ExperimentConfig:
    """Return a copy with ``key -> raw string or value`` pairs applied."""
    updates = {}
    for key, value in pairs.items():
        if key not in _HINTS:
            raise ConfigError(f"unknown config key {key!r}")
        updates[key] = _convert(key, value) if isinstance(value, str) else value
    return dataclasses.replace(cfg, **updates).validate()


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        key = key.strip()
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        pairs[key] = value
    return apply_overrides(base or ExperimentConfig(), pairs)


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), base)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        lines.append(f"# {KEY_DOCS[f.name]}")
        lines.append(f"{f.name} = {_format(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"
