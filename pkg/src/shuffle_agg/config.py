"""Experiment configuration: a TOML document (JSON also accepted) parsed into dataclasses."""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from typing import Optional

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .runtime import FAMILIES

PROTOCOLS = ("single", "multi", "multi-vector", "shares", "identity")
COMBINATORS = ("rotate", "coord", "lift")
ATTACKS = ("reconstruction", "poisoning")


class ConfigError(ValueError):
    """Malformed or semantically invalid configuration."""


@dataclass(frozen=True)
class TopologyConfig:
    mode: str = "single"
    rate_limit: Optional[int] = None


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "reconstruction"
    rho: float = 0.2
    method: str = "summation"
    mc_samples: int = 100
    budget: int = 1_000_000
    probe_budget: int = 4096
    alpha: float = 1e-3
    packing_seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    protocol: str = "multi"
    combinators: tuple = ()
    n: int = 1000
    d: int = 4
    eps: float = 1.0
    delta: float = 1e-5
    trials: int = 100
    seed: int = 0
    input_family: str = "sup"
    level: float = 4.0
    frame_seed: int = 0
    precision_bits: int = 24
    shares: int = 3
    r: Optional[int] = None
    gamma: Optional[float] = None
    k: int = 2
    sigma: float = 0.0
    topology: TopologyConfig = TopologyConfig()
    attack: AttackConfig = AttackConfig()
    sweep: dict = field(default_factory=dict)

    def point(self, **values) -> "ExperimentConfig":
        """This config with some fields replaced and the sweep axes dropped."""
        return dataclasses.replace(self, sweep={}, **values)


SWEEPABLE = ("n", "d", "eps", "delta", "trials", "level", "precision_bits", "shares", "r", "gamma", "k", "sigma")
_NESTED = {"topology": TopologyConfig, "attack": AttackConfig}


def _types(cls) -> dict:
    hints = {}
    for f in dataclasses.fields(cls):
        hints[f.name] = f.type
    return hints


def _coerce(name: str, annotation: str, value):
    base = annotation.replace("Optional[", "").rstrip("]")
    if value is None and annotation.startswith("Optional"):
        return None
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field {name!r} must be an integer, got {value!r}")
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field {name!r} must be a number, got {value!r}")
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"field {name!r} must be a string, got {value!r}")
        return value
    if base == "tuple":
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"field {name!r} must be a list of strings")
        return tuple(value)
    return value


def _build(cls, record: dict, where: str):
    if not isinstance(record, dict):
        raise ConfigError(f"{where or 'document'} must be a table")
    hints = _types(cls)
    unknown = sorted(set(record) - set(hints))
    if unknown:
        names = [f"{where}.{key}" if where else key for key in unknown]
        raise ConfigError(f"unknown key {names[0]!r}" + (f" (and {names[1:]})" if names[1:] else ""))
    values = {}
    for key, value in record.items():
        name = f"{where}.{key}" if where else key
        if key in _NESTED:
            values[key] = _build(_NESTED[key], value, name)
        elif key == "sweep":
            values[key] = _sweep(value)
        else:
            values[key] = _coerce(name, hints[key], value)
    return cls(**values)


def _sweep(record) -> dict:
    if not isinstance(record, dict):
        raise ConfigError("sweep must be a table of lists")
    axes = {}
    for key, values in record.items():
        if key not in SWEEPABLE:
            raise ConfigError(f"sweep axis {key!r} does not name a numeric field")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep axis {key!r} must be a non-empty list")
        hint = _types(ExperimentConfig)[key]
        axes[key] = [_coerce(f"sweep.{key}", hint, v) for v in values]
    return axes


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.protocol not in PROTOCOLS:
        raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {cfg.protocol!r}")
    for c in cfg.combinators:
        if c not in COMBINATORS:
            raise ConfigError(f"combinator {c!r} is not one of {COMBINATORS}")
    if cfg.combinators.count("lift") > 1:
        raise ConfigError("lift may appear at most once")
    if cfg.input_family not in FAMILIES + ("sup",):
        raise ConfigError(f"input_family must be one of {FAMILIES + ('sup',)}")
    if cfg.topology.mode not in ("single", "per-coordinate"):
        raise ConfigError("topology.mode must be 'single' or 'per-coordinate'")
    if cfg.attack.kind not in ATTACKS:
        raise ConfigError(f"attack.kind must be one of {ATTACKS}")
    if cfg.attack.method not in ("summation", "unbiased"):
        raise ConfigError("attack.method must be 'summation' or 'unbiased'")
    points = [cfg] + [cfg.point(**{k: v}) for k, vs in cfg.sweep.items() for v in vs]
    for p in points:
        if p.trials < 1:
            raise ConfigError("trials must be >= 1")
        if p.n < 1 or p.d < 1:
            raise ConfigError("n and d must be >= 1")
        if not p.eps > 0 or not 0 < p.delta < 1:
            raise ConfigError("need eps > 0 and 0 < delta < 1")
    return cfg


def parse_config(text: str, fmt: str | None = None) -> ExperimentConfig:
    """Parse a TOML (or JSON) document; unknown keys and bad types raise :class:`ConfigError`."""
    fmt = fmt or ("json" if text.lstrip().startswith("{") else "toml")
    try:
        record = json.loads(text) if fmt == "json" else tomllib.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}") from exc
    return validate(_build(ExperimentConfig, record, ""))


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, "json" if path.endswith(".json") else None)


def to_record(cfg: ExperimentConfig) -> dict:
    """Plain-dict form with unset optional fields omitted."""
    def strip(obj):
        out = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            if value is None:
                continue
            if dataclasses.is_dataclass(value):
                value = strip(value)
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = {k: list(v) for k, v in value.items()}
            out[f.name] = value
        return out
    return strip(cfg)


def serialize(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_record(cfg))
