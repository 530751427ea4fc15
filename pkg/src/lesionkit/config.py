"""One INI settings file shared by the command-line tools and the service.

Three sections, all optional::

    [training]
    backbone = micro_cnn
    learning_rate = 1e-4
    batch_size = 32
    max_epochs = 50
    early_stop_patience = 7
    lr_reduce_patience = 3
    lr_reduce_factor = 0.5
    min_lr = 1e-6
    monitor = val_loss
    seed = 0
    augment = false
    dense_units = 128        ; comma-separated for more than one layer
    dropout_rate = 0.3
    use_batch_norm = true
    stage = frozen           ; or partial
    stage_last_n = 0

    [explanation]
    num_samples = 1000
    kernel_width = 0.25
    ridge_penalty = 1.0
    top_k = 5
    baseline = mean          ; or an R,G,B triple like 100,100,100
    seed = 0
    target_segments = 50
    compactness = 10.0
    iterations = 10
    min_segments = 2
    max_segments = 400

    [serving]
    host = 127.0.0.1
    port = 8000
    upload_limit_bytes = 10485760
    explain_budget = 400
    explain_seed = 0
    explain_max_side = 256
    lime_segments = 50

Precedence everywhere: command-line flags > file values > built-in defaults.
Unknown sections or keys raise ConfigError instead of silently falling back.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, Optional

from .errors import ConfigError
from .explain import LimeConfig, SuperpixelParams
from .model import HeadConfig
from .training import TrainingConfig

DEFAULT_BACKBONE = "micro_cnn"

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in _BOOL_TRUE:
        return True
    if v in _BOOL_FALSE:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_units(raw: str) -> tuple:
    units = tuple(int(p) for p in raw.replace(" ", "").split(",") if p)
    if not units:
        raise ValueError("dense_units needs at least one integer")
    return units


def _parse_baseline(raw: str):
    v = raw.strip().lower()
    if v in ("mean", "none", ""):
        return None
    parts = [int(p) for p in raw.replace(" ", "").split(",") if p]
    if len(parts) != 3:
        raise ValueError("baseline must be 'mean' or an R,G,B triple")
    return tuple(parts)


_TRAINING_KEYS: Dict[str, Callable[[str], Any]] = {
    "backbone": str.strip,
    "learning_rate": float,
    "batch_size": int,
    "max_epochs": int,
    "early_stop_patience": int,
    "lr_reduce_patience": int,
    "lr_reduce_factor": float,
    "min_lr": float,
    "monitor": str.strip,
    "seed": int,
    "augment": _parse_bool,
    "dense_units": _parse_units,
    "dropout_rate": float,
    "use_batch_norm": _parse_bool,
    "stage": str.strip,
    "stage_last_n": int,
}

_EXPLANATION_KEYS: Dict[str, Callable[[str], Any]] = {
    "num_samples": int,
    "kernel_width": float,
    "ridge_penalty": float,
    "top_k": int,
    "baseline": _parse_baseline,
    "seed": int,
    "target_segments": int,
    "compactness": float,
    "iterations": int,
    "min_segments": int,
    "max_segments": int,
}

_SERVING_KEYS: Dict[str, Callable[[str], Any]] = {
    "host": str.strip,
    "port": int,
    "upload_limit_bytes": int,
    "explain_budget": int,
    "explain_seed": int,
    "explain_max_side": int,
    "lime_segments": int,
}

_SECTIONS = {
    "training": _TRAINING_KEYS,
    "explanation": _EXPLANATION_KEYS,
    "serving": _SERVING_KEYS,
}

_TRAINING_FIELDS = {f.name for f in fields(TrainingConfig)}
_HEAD_FIELDS = {f.name for f in fields(HeadConfig)}
_LIME_FIELDS = {f.name for f in fields(LimeConfig)}
_SUPERPIXEL_FIELDS = {f.name for f in fields(SuperpixelParams)}


@dataclass
class AppConfig:
    """Typed values read from the file, one dict per section.

    The builder methods merge keyword overrides (flags; None means "not
    given") over the file values, then fill the rest from the dataclass
    defaults of the target type.
    """

    training: Dict[str, Any] = field(default_factory=dict)
    explanation: Dict[str, Any] = field(default_factory=dict)
    serving: Dict[str, Any] = field(default_factory=dict)
    path: Optional[str] = None

    def merged(self, section: str, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        base = dict(getattr(self, section))
        for key, value in (overrides or {}).items():
            if value is not None:
                base[key] = value
        return base

    def training_config(self, **overrides) -> TrainingConfig:
        merged = self.merged("training", overrides)
        return TrainingConfig(**{k: v for k, v in merged.items() if k in _TRAINING_FIELDS})

    def head_config(self, **overrides) -> HeadConfig:
        merged = self.merged("training", overrides)
        return HeadConfig(**{k: v for k, v in merged.items() if k in _HEAD_FIELDS})

    def backbone(self, override: Optional[str] = None) -> str:
        return self.merged("training", {"backbone": override}).get("backbone", DEFAULT_BACKBONE)

    def stage(self, override: Optional[str] = None, last_n: Optional[int] = None):
        merged = self.merged("training", {"stage": override, "stage_last_n": last_n})
        return merged.get("stage", "frozen"), merged.get("stage_last_n", 0)

    def lime_config(self, **overrides) -> LimeConfig:
        merged = self.merged("explanation", overrides)
        return LimeConfig(**{k: v for k, v in merged.items() if k in _LIME_FIELDS})

    def superpixel_params(self, **overrides) -> SuperpixelParams:
        merged = self.merged("explanation", overrides)
        return SuperpixelParams(**{k: v for k, v in merged.items() if k in _SUPERPIXEL_FIELDS})

    def serving_kwargs(self, **overrides) -> Dict[str, Any]:
        """Keyword arguments for ServiceSettings; the caller constructs it so
        this module stays importable without the serving dependencies."""
        return self.merged("serving", overrides)


def load_config(path: "str | Path | None" = None) -> AppConfig:
    """Parse the INI file at path, or return an empty config when path is None."""
    if path is None:
        return AppConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no config file at {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"could not parse {path}: {exc}") from exc
    cfg = AppConfig(path=str(path))
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}] in {path}")
        parsers = _SECTIONS[section]
        out = getattr(cfg, section)
        for key, raw in parser.items(section):
            if key not in parsers:
                raise ConfigError(f"unknown key {key!r} in [{section}] of {path}")
            try:
                out[key] = parsers[key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(
                    f"bad value for {key!r} in [{section}] of {path}: {raw!r} ({exc})"
                ) from exc
    return cfg
