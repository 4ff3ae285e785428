"""Experiment configuration: TOML schema, env overrides, validation.

Schema (all keys at top level unless noted):

    epsilon   float in (0, 1/2)         corruption fraction
    T, d, n   ints                      rounds, block width, sample count
    trials    int                       independent repetitions
    seed      int                       master 64-bit seed
    gamma     float in (0, 1)           boundedness parameter
    tau       float in (0, 1)           failure-probability budget
    kappa     float                     filter threshold multiplier
    lam       float (optional)          explicit filter threshold; when
                                        absent, lam = kappa * delta^2 / epsilon
                                        with delta from the tail profile
    workers   int                       trial parallelism

    [generator]    name + parameters (gaussian | binary_product | bounded_k
                   | subgaussian | gaussian_blocks; mean_scale, rho, k, ...)
    [adversary]    name + parameters (identity | mean_shift | staircase
                   | median_attack; magnitude, ...)
    [tail_profile] name + parameters (gaussian | subgaussian | bounded_k
                   | table)
    [[estimators]] name + parameters, one table per estimator to run

Every key can be overridden from the environment with the prefix
ROBMEAN_, upper-cased, nested tables joined by double underscores
(e.g. ROBMEAN_ADVERSARY__MAGNITUDE=5).
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

try:
    import tomllib  # py >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = ["ConfigError", "ExperimentConfig", "Spec", "parse_config",
           "serialize_config", "load_config", "ENV_PREFIX"]

ENV_PREFIX = "ROBMEAN_"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class Spec:
    """A named component (generator/adversary/profile/estimator) with params."""

    name: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    epsilon: float = 0.1
    T: int = 8
    d: int = 1
    n: int = 1000
    trials: int = 1
    seed: int = 0
    gamma: float = 0.5
    tau: float = 0.1
    kappa: float = 10.0
    lam: Optional[float] = None
    workers: int = 1
    #: serialize per-round wall times into the CSV ms column (reports are
    #: then no longer byte-identical across runs)
    timings: bool = False
    generator: Spec = field(default_factory=lambda: Spec("gaussian"))
    adversary: Spec = field(default_factory=lambda: Spec("identity"))
    tail_profile: Spec = field(default_factory=lambda: Spec("gaussian"))
    estimators: list[Spec] = field(default_factory=lambda: [Spec("online_filter")])

    def validate(self) -> "ExperimentConfig":
        if not 0.0 < self.epsilon < 0.5:
            raise ConfigError(f"epsilon: must be in (0, 1/2), got {self.epsilon}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma: must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau: must be in (0, 1), got {self.tau}")
        if self.lam is not None and self.lam <= 0:
            raise ConfigError(f"lam: must be positive, got {self.lam}")
        for key in ("T", "d", "n", "trials", "workers"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(f"{key}: must be at least 1")
        if not self.estimators:
            raise ConfigError("estimators: at least one estimator is required")
        return self


_SPEC_KEYS = ("generator", "adversary", "tail_profile")


def parse_config(text: str, env: Optional[dict] = None) -> ExperimentConfig:
    """Parse TOML text into a validated config, applying env overrides."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config syntax: {e}") from e
    raw = _apply_env(raw, env if env is not None else os.environ)
    cfg = ExperimentConfig()
    for key, val in raw.items():
        if key in _SPEC_KEYS:
            if not isinstance(val, dict) or "name" not in val:
                raise ConfigError(f"{key}: must be a table with a 'name' key")
            params = {k: v for k, v in val.items() if k != "name"}
            setattr(cfg, key, Spec(val["name"], params))
        elif key == "estimators":
            if not isinstance(val, list):
                raise ConfigError("estimators: must be an array of tables")
            specs = []
            for i, e in enumerate(val):
                if not isinstance(e, dict) or "name" not in e:
                    raise ConfigError(f"estimators[{i}]: missing 'name'")
                specs.append(Spec(e["name"], {k: v for k, v in e.items()
                                              if k != "name"}))
            cfg.estimators = specs
        elif hasattr(cfg, key):
            setattr(cfg, key, val)
        else:
            raise ConfigError(f"{key}: unknown configuration key")
    # normalize numeric types
    for key in ("T", "d", "n", "trials", "seed", "workers"):
        try:
            setattr(cfg, key, int(getattr(cfg, key)))
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer")
    cfg.timings = bool(cfg.timings)
    for key in ("epsilon", "gamma", "tau", "kappa"):
        try:
            setattr(cfg, key, float(getattr(cfg, key)))
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a number")
    if cfg.lam is not None:
        cfg.lam = float(cfg.lam)
    return cfg.validate()


def _parse_env_value(s: str) -> Any:
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    return s


def _apply_env(raw: dict, env: dict) -> dict:
    for key, val in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = raw
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"{'.'.join(path)}: env override into a non-table")
        node[path[-1]] = _parse_env_value(val)
    return raw


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize value of type {type(v).__name__}")


def serialize_config(cfg: ExperimentConfig) -> str:
    """Emit the config as TOML; parse(serialize(cfg)) == cfg."""
    lines = []
    for key in ("epsilon", "T", "d", "n", "trials", "seed", "gamma", "tau",
                "kappa", "workers", "timings"):
        lines.append(f"{key} = {_toml_value(getattr(cfg, key))}")
    if cfg.lam is not None:
        lines.append(f"lam = {_toml_value(cfg.lam)}")
    for key in _SPEC_KEYS:
        spec: Spec = getattr(cfg, key)
        lines.append(f"\n[{key}]")
        lines.append(f'name = "{spec.name}"')
        for k, v in spec.params.items():
            lines.append(f"{k} = {_toml_value(v)}")
    for spec in cfg.estimators:
        lines.append("\n[[estimators]]")
        lines.append(f'name = "{spec.name}"')
        for k, v in spec.params.items():
            lines.append(f"{k} = {_toml_value(v)}")
    return "\n".join(lines) + "\n"


def load_config(path: str, env: Optional[dict] = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), env=env)
