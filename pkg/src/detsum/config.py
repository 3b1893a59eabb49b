"""Run configuration: dataclasses plus the line-oriented ``section.key = value``
file format used by the command line."""

from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .space import ConfigError, ModelConfig


@dataclass(frozen=True)
class SolveConfig:
    r: int = 2
    N: int = 2
    I: int = 50
    S: int = 100
    cg_tol: float = 1e-10
    eps_expsum: float = 1e-6
    expsum_R: float = 0.0  # 0 selects a range from the spectrum and mu
    eta_rel: float = 1e-10
    mu_rule: str = "rayleigh"
    seed: int = 0
    fast_path: bool = False
    init_mode: str = "eigen"
    init_noise: float = 0.01
    normal_solver: str = "cg"
    mu_tol: float = 1e-9

    def validate(self) -> None:
        if self.r < 1 or self.I < 1 or self.S < 1 or self.N < 1:
            raise ConfigError("r, N, I and S must all be at least 1")
        if self.mu_rule not in ("rayleigh", "newton"):
            raise ConfigError(f"unknown mu_rule {self.mu_rule!r}")
        if self.init_mode not in ("eigen", "random"):
            raise ConfigError(f"unknown init_mode {self.init_mode!r}")
        if self.normal_solver not in ("cg", "dense"):
            raise ConfigError(f"unknown normal_solver {self.normal_solver!r}")
        if not 0.0 < self.eps_expsum < 1.0:
            raise ConfigError("eps_expsum must lie in (0, 1)")
        if not 0.0 < self.eta_rel < 1.0:
            raise ConfigError("eta_rel must lie in (0, 1)")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    solve: SolveConfig = field(default_factory=SolveConfig)
    output: str = "run"
    reference_energy: float | None = None


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", ""):
        return None
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _coerce(cls, name: str, value, lineno: int):
    kinds = {f.name: f.type for f in fields(cls)}
    kind = kinds[name]
    try:
        if kind == "int":
            if isinstance(value, bool) or int(value) != value:
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            if not isinstance(value, bool):
                raise ValueError
            return value
        if kind == "str":
            return str(value)
        if kind == "tuple":
            return _as_tuple(value)
        return value
    except (TypeError, ValueError):
        raise ConfigError(f"line {lineno}: bad value {value!r} for key {name!r} ({kind})") from None


def _as_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(_as_tuple(v) if isinstance(v, (list, tuple)) else v for v in value)
    return (value,)


SECTIONS = {"model": ModelConfig, "solve": SolveConfig}
TOP_KEYS = {"run.output": "output", "run.reference_energy": "reference_energy"}


def parse_config(text: str) -> RunConfig:
    values = {"model": {}, "solve": {}}
    top = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        value = _parse_value(raw)
        if key in TOP_KEYS:
            top[TOP_KEYS[key]] = value
            continue
        section, _, name = key.partition(".")
        cls = SECTIONS.get(section)
        if cls is None or name not in {f.name for f in fields(cls)}:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[section][name] = _coerce(cls, name, value, lineno)
    model = ModelConfig(**values["model"])
    solve = SolveConfig(**values["solve"])
    model.validate()
    solve.validate()
    ref = top.get("reference_energy")
    return RunConfig(model, solve, str(top.get("output", "run")),
                     None if ref is None else float(ref))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def with_overrides(cfg: RunConfig, **solve_changes) -> RunConfig:
    changes = {k: v for k, v in solve_changes.items() if v is not None}
    return replace(cfg, solve=replace(cfg.solve, **changes)) if changes else cfg
