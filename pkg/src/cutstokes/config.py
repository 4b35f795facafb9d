"""Run configuration: key=value text (or a JSON object) with validated defaults."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

STUDIES = ("convergence", "viscosity", "slip", "position", "single")

DEFAULT_N_LIST = (4, 8, 16, 32)
DEFAULT_MU_PLUS_LIST = tuple(10.0**k for k in range(9))
DEFAULT_F_LIST = tuple(2.0**k for k in range(-8, 9))
DEFAULT_K_LIST = tuple(range(1, 21))


class ConfigError(ValueError):
    code = "CONFIG_ERROR"


class ParseError(ConfigError):
    code = "PARSE_ERROR"

    def __init__(self, msg: str, line: Optional[int] = None, key: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        super().__init__(f"{self.code}: {msg}" + (f" ({', '.join(where)})" if where else ""))
        self.line, self.key = line, key


class ValidationError(ConfigError):
    code = "VALIDATION_ERROR"

    def __init__(self, violations: list):
        super().__init__(f"{self.code}: " + "; ".join(violations))
        self.violations = list(violations)


@dataclass
class RunConfig:
    study: str = "convergence"
    n: int = 32
    n_list: Optional[tuple] = None
    mu_minus: float = 1.0
    mu_plus: float = 10.0
    mu_plus_list: tuple = DEFAULT_MU_PLUS_LIST
    f: float = 10.0
    f_list: tuple = DEFAULT_F_LIST
    c1: float = 0.0
    c2: float = 0.0
    k: Optional[int] = None
    k_list: tuple = DEFAULT_K_LIST
    gamma: float = 40.0
    gamma_u_minus: float = 0.05
    gamma_u_plus: float = 0.05
    gamma_p_minus: float = 0.05
    gamma_p_plus: float = 0.05
    alpha: float = 0.0
    beta: float = 1.0
    tol: float = 1e-10
    out: str = "results"
    dump_solution: bool = False
    dump_points: int = 101
    record_timings: bool = False

    def resolved_n_list(self, n_max: int = 32) -> tuple:
        if self.n_list is not None:
            return tuple(self.n_list)
        return tuple(n for n in DEFAULT_N_LIST + (64, 128, 256) if n <= n_max)

    def penalty_overrides(self) -> dict:
        return dict(gamma=self.gamma, gamma_u_minus=self.gamma_u_minus,
                    gamma_u_plus=self.gamma_u_plus, gamma_p_minus=self.gamma_p_minus,
                    gamma_p_plus=self.gamma_p_plus, alpha=self.alpha, beta=self.beta)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


# shorthand keys that set both phases at once
_ALIASES = {"gamma_u": ("gamma_u_minus", "gamma_u_plus"),
            "gamma_p": ("gamma_p_minus", "gamma_p_plus")}
_FIELDS = {f.name: f for f in fields(RunConfig)}
_INT = {"n", "k", "dump_points"}
_FLOAT = {"mu_minus", "mu_plus", "f", "c1", "c2", "gamma", "gamma_u_minus", "gamma_u_plus",
          "gamma_p_minus", "gamma_p_plus", "alpha", "beta", "tol"}
_INT_LIST = {"n_list", "k_list"}
_FLOAT_LIST = {"mu_plus_list", "f_list"}
_BOOL = {"dump_solution", "record_timings"}


def _convert(key: str, raw, line=None):
    try:
        if key in _INT:
            if isinstance(raw, float) and not raw.is_integer():
                raise ValueError(raw)
            return int(raw) if not isinstance(raw, str) else int(raw.strip())
        if key in _FLOAT:
            return float(raw)
        if key in _INT_LIST or key in _FLOAT_LIST:
            items = raw if isinstance(raw, (list, tuple)) else [s for s in str(raw).split(",") if s.strip()]
            conv = int if key in _INT_LIST else float
            if not items:
                raise ValueError("empty list")
            return tuple(conv(str(v).strip()) if isinstance(v, str) else conv(v) for v in items)
        if key in _BOOL:
            if isinstance(raw, bool):
                return raw
            s = str(raw).strip().lower()
            if s in ("1", "true", "yes", "on"):
                return True
            if s in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return str(raw).strip()
    except (TypeError, ValueError) as exc:
        raise ParseError(f"cannot read value {raw!r}", line, key) from exc


def _assign(values: dict, key: str, raw, line=None):
    if key == "c":
        parts = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
        if len(parts) != 2:
            raise ParseError("c needs two comma-separated numbers", line, key)
        values["c1"], values["c2"] = (_convert("c1", p, line) for p in parts)
        return
    if key == "mu":
        parts = raw if isinstance(raw, (list, tuple)) else str(raw).split(",")
        if len(parts) != 2:
            raise ParseError("mu needs two comma-separated numbers", line, key)
        values["mu_minus"], values["mu_plus"] = (_convert("mu_minus", p, line) for p in parts)
        return
    if key in _ALIASES:
        for k in _ALIASES[key]:
            values[k] = _convert(k, raw, line)
        return
    if key not in _FIELDS:
        raise ParseError("unknown key", line, key)
    values[key] = _convert(key, raw, line)


def parse_config(text: str) -> RunConfig:
    """Parse and validate. Tokens are ``key=value`` separated by whitespace or
    newlines; ``#`` starts a comment. Text starting with ``{`` is read as JSON."""
    values: dict = {}
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, exc.lineno) from exc
        if not isinstance(data, dict):
            raise ParseError("JSON config must be an object")
        for key, raw in data.items():
            _assign(values, key, raw)
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0]
            for tok in line.split():
                key, sep, raw = tok.partition("=")
                if not sep or not key:
                    raise ParseError(f"expected key=value, got {tok!r}", lineno)
                if not raw:
                    raise ParseError("missing value", lineno, key)
                _assign(values, key, raw, lineno)
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _is_pow2(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


def validate(cfg: RunConfig, n_max: Optional[int] = None) -> RunConfig:
    bad = []
    if cfg.study not in STUDIES:
        bad.append(f"study must be one of {', '.join(STUDIES)}")
    nums = {k: getattr(cfg, k) for k in _FLOAT}
    for k, v in nums.items():
        if not math.isfinite(v):
            bad.append(f"{k} must be finite")
    if not cfg.gamma > 0:
        bad.append("gamma must be positive")
    for k in ("gamma_u_minus", "gamma_u_plus", "gamma_p_minus", "gamma_p_plus"):
        if getattr(cfg, k) < 0:
            bad.append(f"{k} must be non-negative")
    if abs(cfg.alpha + cfg.beta - 1.0) > 1e-12:
        bad.append("alpha + beta must equal 1")
    if cfg.alpha < 0 or cfg.beta < 0:
        bad.append("alpha and beta must be non-negative")
    if not cfg.mu_minus > 0:
        bad.append("mu_minus must be positive")
    mu_plus = cfg.mu_plus_list if cfg.study == "viscosity" else (cfg.mu_plus,)
    if any(m < cfg.mu_minus for m in mu_plus):
        bad.append("mu_minus must not exceed mu_plus")
    slips = cfg.f_list if cfg.study == "slip" else (cfg.f,)
    if any(not f > 0 for f in slips):
        bad.append("f must be positive")
    if not cfg.tol > 0:
        bad.append("tol must be positive")
    if not _is_pow2(cfg.n):
        bad.append("n must be a power of two >= 2")
    if cfg.n_list is not None:
        nl = cfg.n_list
        if any(not _is_pow2(n) for n in nl):
            bad.append("n_list entries must be powers of two >= 2")
        if any(b <= a for a, b in zip(nl, nl[1:])):
            bad.append("n_list must be strictly increasing")
        if n_max is not None and max(nl) > n_max:
            bad.append(f"n_list exceeds n-max {n_max}")
    if n_max is not None and cfg.study != "convergence" and cfg.n > n_max:
        bad.append(f"n exceeds n-max {n_max}")
    if cfg.k is not None and cfg.k < 0:
        bad.append("k must be non-negative")
    if any(k < 0 for k in cfg.k_list):
        bad.append("k_list entries must be non-negative")
    if cfg.dump_points < 2:
        bad.append("dump_points must be at least 2")
    if bad:
        raise ValidationError(bad)
    return cfg
