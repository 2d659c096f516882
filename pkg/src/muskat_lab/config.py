"""Flat ``key = value`` run configuration (``#`` starts a comment)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

from .kernel import QuadratureSpec


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    s = s.strip()
    return None if s.lower() in ("", "none", "auto") else float(s)


@dataclass
class RunConfig:
    n: int = 64
    period: float = 4.0
    L: float = 2.0
    dt_factor: float = 0.25
    dt_max: float = 0.25
    scheme: str = "ifrk4"
    horizon: float = 1.0
    steps: int = 0  # final step index; 0 means no step limit
    checkpoint_every: int = 10
    seed: int = 0
    deterministic: bool = True
    output_dir: str = "run"
    initial_kind: str = "random-lipschitz"
    initial_params: str = ""
    quadrature_rho0: float | None = None
    quadrature_R: float | None = None
    quadrature_rings: int = 24
    quadrature_sectors: int = 40
    quadrature_interpolation: str = "bicubic"
    quadrature_tail: str = "quadratic"
    monitors_modulus: bool = True
    monitors_radius_cap: float = math.inf
    monitors_threshold: float = 1e-9
    monitors_sup_slack: float = 1e-6
    monitors_l2_slack: float = 1e-6
    monitors_stop_on_crossing: bool = True

    def quadrature(self) -> QuadratureSpec:
        return QuadratureSpec(
            rho0=self.quadrature_rho0,
            R=self.quadrature_R,
            rings=self.quadrature_rings,
            sectors=self.quadrature_sectors,
            interpolation=self.quadrature_interpolation,
            tail=self.quadrature_tail,
        )

    def initial_param_dict(self) -> dict:
        return parse_params(self.initial_params)

    def to_text(self) -> str:
        """Canonical text form; ``parse_config(c.to_text()) == c``."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = "auto"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{_KEY_OF[f.name]} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return asdict(self)


def _key(name: str) -> str:
    for prefix in ("initial_", "quadrature_", "monitors_"):
        if name.startswith(prefix):
            return prefix[:-1] + "." + name[len(prefix) :]
    return name


_KEY_OF = {f.name: _key(f.name) for f in fields(RunConfig)}
_FIELD_OF = {v: k for k, v in _KEY_OF.items()}


def parse_params(text: str) -> dict:
    """``"k1=1; amp=1e-3"`` -> {"k1": 1.0, "amp": 0.001}."""
    out = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad initial.params entry {part!r}")
        k, v = part.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise ConfigError(f"initial.params value for {k.strip()!r} is not a number") from exc
    return out


def parse_config(text: str) -> RunConfig:
    kw = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        name = _FIELD_OF.get(key)
        if name is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        typ = types[name]
        try:
            if typ == "int":
                kw[name] = int(val)
            elif typ == "bool":
                kw[name] = _bool(val)
            elif typ == "float":
                kw[name] = float(val)
            elif typ == "float | None":
                kw[name] = _opt_float(val)
            else:
                kw[name] = val
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    cfg = RunConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    if cfg.L < 1:
        raise ConfigError("L must be >= 1")
    if cfg.horizon <= 0 and cfg.steps <= 0:
        raise ConfigError("need a positive horizon or step count")
    if cfg.checkpoint_every < 1:
        raise ConfigError("checkpoint_every must be >= 1")
    if cfg.scheme not in ("rk4", "ifrk4"):
        raise ConfigError("scheme must be rk4 or ifrk4")
    if cfg.initial_kind not in ("mode", "random-lipschitz", "fixture-crossing"):
        raise ConfigError("initial.kind must be mode, random-lipschitz or fixture-crossing")
    if not (0 <= cfg.seed < 2**64):
        raise ConfigError("seed must be an unsigned 64-bit integer")
    parse_params(cfg.initial_params)


def load_config(path) -> tuple[RunConfig, str]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text), text
