# cli/config.py
"""
RunConfig: bundled defaults (data/config/defaults.cfg), then an optional user
file with the same flat `key = value` format, then command-line overrides.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields
from typing import Any, Callable, Dict, Optional, Tuple

from dotenv import dotenv_values

from core.errors import ConfigError
from core.evolution import SCHEMES, SOLVERS, EvolveConfig
from resources import resource_path

DEFAULTS_FILE = resource_path(os.path.join("data", "config", "defaults.cfg"))
FAMILIES = ("linear", "power", "steady-perturbed", "random")


@dataclass(frozen=True)
class RunConfig:
    N: int
    m: float
    tol: float
    u0: str
    n: int
    grading: float
    dt: float
    t_end: float
    scheme: str
    solver: str
    snapshot_every: int
    dense_until: float
    snapshot_growth: float
    max_halvings: int
    blowup_ratio: float
    snapshot_times: Tuple[float, ...]
    lambda_frac: float
    seed: int
    out: str

    def evolve_config(self) -> EvolveConfig:
        return EvolveConfig(
            dt=self.dt,
            t_end=self.t_end,
            scheme=self.scheme,
            solver=self.solver,
            snapshot_every=self.snapshot_every,
            dense_until=self.dense_until,
            snapshot_growth=self.snapshot_growth,
            max_halvings=self.max_halvings,
            blowup_ratio=self.blowup_ratio,
        )

    def echo(self) -> Dict[str, Any]:
        d = asdict(self)
        d["snapshot_times"] = list(self.snapshot_times)
        return d


def _int(v: str) -> int:
    f = float(v)
    if f != int(f):
        raise ValueError(f"{v!r} is not an integer")
    return int(f)


def _times(v: str) -> Tuple[float, ...]:
    return tuple(sorted(float(p) for p in v.split(",") if p.strip())) if v else ()


_COERCE: Dict[str, Callable[[str], Any]] = {
    "N": _int,
    "m": float,
    "tol": float,
    "u0": str,
    "n": _int,
    "grading": float,
    "dt": float,
    "t_end": float,
    "scheme": str,
    "solver": str,
    "snapshot_every": _int,
    "dense_until": float,
    "snapshot_growth": float,
    "max_halvings": _int,
    "blowup_ratio": float,
    "snapshot_times": _times,
    "lambda_frac": float,
    "seed": _int,
    "out": str,
}


def _read_file(path: str) -> Dict[str, str]:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    unknown = sorted(set(values) - set(_COERCE))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    return {k: ("" if v is None else v) for k, v in values.items()}


def _check_u0(spec: str) -> None:
    name, _, arg = spec.partition(":")
    if name not in FAMILIES:
        raise ConfigError(f"u0 must be one of {FAMILIES} (optionally ':<number>'), got {spec!r}")
    if name == "power":
        try:
            if float(arg) <= 0:
                raise ValueError
        except ValueError:
            raise ConfigError(f"u0 power family needs a positive exponent, got {spec!r}") from None
    if name == "steady-perturbed" and arg:
        try:
            float(arg)
        except ValueError:
            raise ConfigError(f"u0 steady-perturbed needs a numeric eps, got {spec!r}") from None
    if name == "random" and arg:
        try:
            if int(arg) < 1:
                raise ValueError
        except ValueError:
            raise ConfigError(f"u0 random family needs a positive term count, got {spec!r}") from None


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.N < 2:
        raise ConfigError(f"N must be >= 2, got {cfg.N}")
    if not (math.isfinite(cfg.m) and cfg.m >= 0):
        raise ConfigError(f"m must be finite and >= 0, got {cfg.m}")
    if not cfg.tol > 0:
        raise ConfigError(f"tol must be > 0, got {cfg.tol}")
    if cfg.n < 8:
        raise ConfigError(f"n must be >= 8, got {cfg.n}")
    if cfg.grading < 1:
        raise ConfigError(f"grading must be >= 1, got {cfg.grading}")
    if cfg.scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {cfg.scheme!r}")
    if cfg.solver not in SOLVERS:
        raise ConfigError(f"solver must be one of {SOLVERS}, got {cfg.solver!r}")
    if not 0 <= cfg.lambda_frac < 1:
        raise ConfigError(f"lambda_frac must lie in [0, 1), got {cfg.lambda_frac}")
    if cfg.seed < 0:
        raise ConfigError(f"seed must be >= 0, got {cfg.seed}")
    _check_u0(cfg.u0)
    cfg.evolve_config()   # dt, t_end and snapshot policy checks
    return cfg


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    raw = _read_file(DEFAULTS_FILE)
    if path:
        raw.update(_read_file(path))
    values: Dict[str, Any] = {}
    for key, conv in _COERCE.items():
        if key not in raw:
            raise ConfigError(f"missing config key {key!r}")
        try:
            values[key] = conv(raw[key].strip())
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {raw[key]!r} ({e})") from e
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _COERCE:
            raise ConfigError(f"unknown override {key!r}")
        try:
            values[key] = _COERCE[key](val) if isinstance(val, str) else val
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad value for {key}: {val!r} ({e})") from e
    return validate(RunConfig(**values))


def config_keys() -> Tuple[str, ...]:
    return tuple(f.name for f in fields(RunConfig))
