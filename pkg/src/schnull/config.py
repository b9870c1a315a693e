"""Flat key=value run configuration.

One ``key = value`` per line; ``#`` starts a comment. Every key has a type and
a default; unknown keys and unparsable values raise ConfigError. A resolved
configuration is written back in the same syntax with every key present, so
re-reading it reproduces the run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Union, get_args, get_origin, get_type_hints


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # weights
    lam: float = 2.0
    mu: float = 2.0
    m: float = 1.0
    T: float = 0.5
    sigma: Optional[float] = 4.0
    scaling: str = "practical"
    ell_magnitude: float = 1e-3
    G0_left: float = 0.3
    G0_right: float = 0.7
    # grid and tree
    N: int = 32
    bc: str = "clamped"
    depth: int = 3
    substeps: int = 2
    # weights subcommand tables
    table_nt: int = 101
    table_nx: int = 101
    # identity-check
    identity_cases: str = "all"
    identity_grids: str = "64,128,256"
    # carleman
    estimate: str = "carest2"
    ensemble: int = 50
    smooth_dt: float = 1e-4
    # hum
    cost: str = "full"
    initial: str = "sin2"
    eps: float = 1e-2
    eps_levels: int = 6
    cg_tol: float = 1e-10
    cg_max_iter: int = 1000
    # semilinear
    nonlinearity: str = "mixed"
    kappa: float = 0.1
    kappa1: float = 0.0
    clamp_M: float = 1.0
    picard_max_iter: int = 30
    picard_tol: float = 1e-10
    # sweep
    sweep_target: str = "hum"
    sweep_key: str = "eps"
    sweep_values: str = ""
    # run
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        choices = {
            "scaling": ("exact", "practical"),
            "bc": ("clamped", "simply_supported"),
            "estimate": ("carest2", "carest1"),
            "cost": ("full", "state_only"),
            "initial": ("sin2", "bump", "random", "zero"),
            "nonlinearity": ("mixed", "clamped_ch", "zero"),
            "sweep_target": ("hum", "carleman", "semilinear"),
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if not 0 <= self.G0_left < self.G0_right <= 1:
            raise ConfigError("need 0 <= G0_left < G0_right <= 1")
        for key in ("N", "substeps", "ensemble", "eps_levels", "cg_max_iter", "picard_max_iter", "threads", "table_nt", "table_nx"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.depth < 0:
            raise ConfigError("depth must be >= 0")
        if self.sweep_key not in _TYPES or self.sweep_key in ("sweep_key", "sweep_values", "sweep_target"):
            raise ConfigError(f"cannot sweep over {self.sweep_key!r}")

    @property
    def G0(self) -> tuple[float, float]:
        return (self.G0_left, self.G0_right)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        return replace(self, **{k: parse_value(k, v) for k, v in overrides.items()})

    def dump(self) -> str:
        return "".join(f"{k} = {format_value(v)}\n" for k, v in asdict(self).items())


_TYPES: dict[str, Any] = get_type_hints(RunConfig)


def _base_type(tp):
    if get_origin(tp) is Union:
        args = [a for a in get_args(tp) if a is not type(None)]
        return args[0], True
    return tp, False


def parse_value(key: str, raw: str) -> Any:
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    tp, optional = _base_type(_TYPES[key])
    raw = raw.strip()
    if optional and raw.lower() in ("none", ""):
        return None
    try:
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {tp.__name__}") from None
    return raw


def format_value(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {n}: unknown config key {key!r}")
        out[key] = val
    return out


def parse_override(item: str) -> tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    k, v = item.split("=", 1)
    return k.strip(), v


def load(path: Optional[Union[str, Path]] = None, overrides: Optional[list[str]] = None) -> RunConfig:
    raw = parse_text(Path(path).read_text()) if path is not None else {}
    for item in overrides or []:
        k, v = parse_override(item)
        raw[k] = v
    try:
        return RunConfig().with_overrides(raw)
    except TypeError as e:  # pragma: no cover - guarded by parse_value
        raise ConfigError(str(e)) from None


def keys() -> list[str]:
    return [f.name for f in fields(RunConfig)]
