"""Run configuration loaded from YAML and validated against the schema.

Every section maps onto a frozen dataclass; keys the schema does not
declare are rejected rather than ignored, so a typo cannot silently fall
back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import get_type_hints

import yaml

from .errors import ConfigError
from .experiment import PipelineParams, VARIANTS
from .quality import HOUR_GATE
from .synth import CohortProfile

_HINT_CACHE: dict[type, dict] = {}


@dataclass(frozen=True)
class DetectorConfig:
    """Knobs of the heart-rate event detector and its scoring."""

    baseline_window_s: float = 120.0
    sqi_gate: float = 0.8
    match_pre_s: float = 60.0
    match_post_s: float = 60.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Outer evaluation layout."""

    n_splits: int = 10
    test_frac: float = 1 / 3
    variants: tuple[str, ...] = VARIANTS
    scenario_k: int = 8
    curve_fractions: tuple[float, ...] = ()
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides paths, which stay on the CLI."""

    seed: int = 0
    gate: float = HOUR_GATE
    max_hours: int = 48
    cohort: CohortProfile = field(default_factory=CohortProfile)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    ml: PipelineParams = field(default_factory=PipelineParams)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)


def _hints(cls) -> dict:
    if cls not in _HINT_CACHE:
        _HINT_CACHE[cls] = get_type_hints(cls)
    return _HINT_CACHE[cls]


def _check_scalar(hint, value, path: str):
    """Best-effort type check for plain scalar fields; ints widen to float."""
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path} must be a number, got {value!r}")
        return float(value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}")
        return value
    if hint is str and not isinstance(value, str):
        raise ConfigError(f"{path} must be a string, got {value!r}")
    return value


def _build(cls, data, path: str):
    """Instantiate a dataclass from a mapping, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping, "
                          f"got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(
            f"unknown key {path + '.' if path else ''}"
            f"{sorted(unknown)[0]} (valid: {sorted(known)})")
    kwargs = {}
    hints = _hints(cls)
    for name, value in data.items():
        hint = hints.get(name)
        sub = path + "." + name if path else name
        if is_dataclass(hint):
            kwargs[name] = _build(hint, value, sub)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = _check_scalar(hint, value, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value under {path or 'config'}: {exc}") \
            from exc


def load_config(path: str | Path | None, seed: int | None = None) -> RunConfig:
    """Parse and validate a YAML config file; defaults when path is None.

    A ``seed`` argument overrides the file's master seed. The per-stage
    ML seed is always derived from the master seed and may not be set
    in the file.
    """
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping in {path}")
        data = loaded
    if isinstance(data.get("ml"), dict) and "seed" in data["ml"]:
        raise ConfigError(
            "ml.seed is derived from the master seed; set top-level seed")
    cfg = _build(RunConfig, data, "")
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if not 0.0 <= cfg.gate <= 1.0:
        raise ConfigError(f"gate must lie in [0, 1], got {cfg.gate}")
    if cfg.max_hours < 1:
        raise ConfigError("max_hours must be at least 1")
    if not 0.0 < cfg.experiment.test_frac < 1.0:
        raise ConfigError("experiment.test_frac must lie in (0, 1)")
    unknown = [v for v in cfg.experiment.variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variant {unknown[0]!r} "
                          f"(valid: {list(VARIANTS)})")
    if cfg.experiment.workers < 1:
        raise ConfigError("experiment.workers must be at least 1")
    for f in cfg.experiment.curve_fractions:
        if not 0.0 < f <= 1.0:
            raise ConfigError(
                f"curve_fractions must lie in (0, 1], got {f}")


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain nested dict of a config, suitable for the run manifest."""
    def conv(obj):
        if is_dataclass(obj) and not isinstance(obj, type):
            return {f.name: conv(getattr(obj, f.name))
                    for f in fields(obj)}
        if isinstance(obj, tuple):
            return [conv(v) for v in obj]
        if isinstance(obj, dict):
            return {k: conv(v) for k, v in obj.items()}
        return obj
    return conv(cfg)
