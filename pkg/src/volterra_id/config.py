"""Nested run configuration: loading, defaults, flag overrides and object builders.

A config is a nested mapping read from one YAML (or JSON) file. Every key can
be overridden by a dotted ``key.path=value`` assignment; the CLI flags are
shortcuts for the common ones.
"""
from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .estimators import METHODS, EstimatorConfig
from .poles import PoleSearchConfig
from .regularization import TuningBounds, TuningConfig
from .signals import PRESETS, WienerSystem, preset

__all__ = [
    "ConfigError",
    "DESK_DEFAULTS",
    "PAPER_SCALE",
    "load_config",
    "merge",
    "nested",
    "apply_override",
    "resolve",
    "system_from_config",
    "estimator_config",
    "default_memory",
    "default_basis_size",
]


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 1."""


# desk scale; the paper-scale values live in PAPER_SCALE
DESK_DEFAULTS = {
    "system": {"preset": "Sys2a"},
    "data": {"n": 1000, "snr_db": 20.0, "seed": 0, "snr_convention": "power", "noise_var": None},
    "method": "LBF",
    "memory": None,
    "basis_size": None,
    "seed": 0,
    "poles": {},
    "tuning": {"starts": 20, "maxiter": 200, "pinned": {}},
    "validation": {"length": 10_000, "seed": 2_000_003},
    "campaign": {
        "methods": ["LBF", "ReLBF"],
        "snr_db": [20.0],
        "realizations": 20,
        "base_seed": 0,
        "workers": None,
    },
    "output": None,
}

PAPER_SCALE = {
    "data": {"n": 3412},
    "memory": 70,
    "basis_size": 15,
    "validation": {"length": 50_000},
    "campaign": {"realizations": 100, "snr_db": [20.0, 5.0]},
}

_STEP1_MEMORY = {1: 60, 2: 30, 3: 15, 4: 8}
_BASIS_SIZE = {1: 10, 2: 10, 3: 6, 4: 4}


def default_memory(max_order: int) -> int:
    """Time-domain memory for the Step-1 estimate at desk scale."""
    return _STEP1_MEMORY.get(max_order, 6)


def default_basis_size(max_order: int) -> int:
    return _BASIS_SIZE.get(max_order, 4)


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{where}: config parse error: {problem}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping, got {type(data).__name__}")
    return data


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``override`` wins."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(cfg: dict, ref: dict, prefix: str = ""):
    for k, v in cfg.items():
        if k not in ref:
            raise ConfigError(f"unknown config key {prefix + str(k)!r}")
        # free-form sub-tables
        if k in ("poles", "pinned", "system", "initial"):
            continue
        if isinstance(ref[k], dict) and isinstance(v, dict):
            _check_keys(v, ref[k], prefix + k + ".")


def nested(key: str, value) -> dict:
    """``nested("a.b", v) == {"a": {"b": v}}``."""
    parts = key.strip().split(".")
    node = {parts[-1]: value}
    for p in reversed(parts[:-1]):
        node = {p: node}
    return node


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``a.b.c=value``; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.path=value")
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ConfigError(f"override {assignment!r}: cannot parse value {raw!r}") from None
    return merge(cfg, nested(key, value))


def resolve(*layers: dict) -> dict:
    """Defaults, then each layer in turn; unknown keys are config errors."""
    cfg = copy.deepcopy(DESK_DEFAULTS)
    for layer in layers:
        if layer:
            _check_keys(layer, DESK_DEFAULTS)
            cfg = merge(cfg, layer)
    return cfg


def _as_float(v, key: str) -> float:
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return float("inf")
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {v!r}") from None


def snr_value(v, key: str = "snr_db") -> float:
    return _as_float(v, key)


def system_from_config(cfg: dict) -> WienerSystem:
    s = cfg.get("system") or {}
    try:
        if "preset" in s and "den" not in s:
            return preset(s["preset"])
        if "den" not in s:
            raise ConfigError(f"system needs 'preset' (one of {sorted(PRESETS)}) or 'den' and 'gains'")
        gains = s.get("gains")
        if gains is None:
            raise ConfigError("custom system needs 'gains', one per kernel order")
        return WienerSystem(tuple(s["den"]), tuple(gains), name=str(s.get("name", "custom")))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system: {exc}") from None


def _per_order(value, M: int, key: str, default: int) -> tuple:
    if value is None:
        return (default,) * M
    if np.isscalar(value):
        return (int(value),) * M
    value = tuple(int(v) for v in value)
    if len(value) != M:
        raise ConfigError(f"{key} needs {M} entries (one per kernel order), got {len(value)}")
    return value


def estimator_config(cfg: dict, max_order: int, method: str | None = None, seed=None) -> EstimatorConfig:
    method = method or cfg.get("method")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {list(METHODS)}")
    memory = _per_order(cfg.get("memory"), max_order, "memory", default_memory(max_order))
    basis = _per_order(cfg.get("basis_size"), max_order, "basis_size", default_basis_size(max_order))
    try:
        poles = dict(cfg.get("poles") or {})
        if "initial" in poles:
            poles["initial"] = {int(k): tuple(v) for k, v in poles["initial"].items()}
        pole_cfg = PoleSearchConfig(**poles)
        t = dict(cfg.get("tuning") or {})
        bounds = TuningBounds(**{k: tuple(v) for k, v in (t.pop("bounds", None) or {}).items()})
        tuning = TuningConfig(
            starts=int(t.pop("starts", 20)),
            bounds=bounds,
            pinned=dict(t.pop("pinned", None) or {}),
            maxiter=int(t.pop("maxiter", 200)),
        )
        if t:
            raise ConfigError(f"unknown tuning key(s) {sorted(t)}")
        return EstimatorConfig(
            method,
            memory,
            basis,
            pole_cfg,
            tuning,
            int(cfg.get("seed", 0) if seed is None else seed),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid estimator settings: {exc}") from None
