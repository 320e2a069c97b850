"""Experiment configuration read from a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored and values may be quoted. Keys are
case-insensitive. Example::

    method = K_EXP
    problem = synthetic
    loss = logistic
    n = 500
    d = 20
    lambda = 0.01
    seeds = 5
    rho = 10, 100, 1000
    ls.gamma_max = 10/L
"""

from __future__ import annotations

import configparser
import enum
import re
from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigError
from ..linesearch import LineSearchConfig, LineSearchMode

__all__ = ["Method", "ExperimentConfig", "DEFAULT_RHO_GRID"]

DEFAULT_RHO_GRID = (10.0, 100.0, 1000.0)
_SECTION = "experiment"


class Method(str, enum.Enum):
    K_CNST = "K_CNST"
    K_EXP = "K_EXP"
    KR20 = "KR20"
    ACC_K_CNST = "ACC_K_CNST"
    ACC_K_EXP = "ACC_K_EXP"
    SLS_EXP = "SLS_EXP"
    SLS_ONLINE = "SLS_ONLINE"

    @property
    def accelerated(self) -> bool:
        return self in (Method.ACC_K_CNST, Method.ACC_K_EXP)

    @property
    def line_search(self) -> bool:
        return self in (Method.SLS_EXP, Method.SLS_ONLINE)

    @property
    def uses_rho(self) -> bool:
        return self is Method.KR20 or self.accelerated

    @property
    def default_schedule(self) -> str:
        if self in (Method.K_CNST, Method.ACC_K_CNST):
            return "constant"
        if self is Method.KR20:
            return "kr20"
        return "exp"


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved experiment description; ``None`` fields take defaults that depend on the problem."""

    method: Method = Method.K_EXP
    problem: str = "synthetic"  # synthetic | quadratic | libsvm
    data: str | None = None
    loss: str = "squared"
    lam: float = 0.0
    n: int = 100
    d: int = 10
    condition: float = 10.0
    noise: float = 0.1
    data_seed: int = 0
    schedule: str | None = None
    beta: float = 1.0
    delta: float = 0.5
    T: int | None = None
    batch_size: int = 1
    seeds: int = 5
    base_seed: int = 0
    checkpoint_every: int | None = None
    L: float | str = "auto"
    mu: float | str = "auto"
    rho: tuple = DEFAULT_RHO_GRID
    ls: LineSearchConfig = field(default_factory=LineSearchConfig)
    ls_gamma_max_over_L: float | None = None
    ls_variant: str | None = None
    probe_index: str = "previous"
    w1: tuple | None = None
    reference: bool = True
    output: str = "results"

    def __post_init__(self):
        try:
            if not isinstance(self.method, Method):
                object.__setattr__(self, "method", Method(str(self.method).upper().replace("-", "_")))
        except ValueError:
            raise ConfigError(f"unknown method {self.method!r}; choose from {[m.value for m in Method]}") from None
        if self.problem not in ("synthetic", "quadratic", "libsvm"):
            raise ConfigError(f"unknown problem source {self.problem!r}")
        if self.problem == "libsvm" and not self.data:
            raise ConfigError("problem = libsvm needs a data path")
        if self.loss not in ("squared", "logistic"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.seeds < 1:
            raise ConfigError("need at least one seed")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.T is not None and self.T < 1:
            raise ConfigError("T must be positive")
        if self.checkpoint_every is not None and self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be positive")
        if not self.rho or any(r < 1 for r in self.rho):
            raise ConfigError("rho values must be >= 1")
        if self.schedule is not None and self.schedule not in ("constant", "poly", "exp", "kr20"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.schedule is not None and self.schedule != self.method.default_schedule and not self.method.line_search:
            raise ConfigError(f"method {self.method.value} fixes the schedule to {self.method.default_schedule!r}")
        if self.method.line_search and self.schedule == "kr20":
            raise ConfigError("line-search methods take an alpha schedule, not kr20")
        if self.variant not in ("online", "decorrelated_conservative"):
            raise ConfigError(f"unknown line-search variant {self.variant!r}")
        if self.probe_index not in ("previous", "fresh"):
            raise ConfigError(f"unknown probe index rule {self.probe_index!r}")

    # --- derived values ----------------------------------------------------

    @property
    def schedule_kind(self) -> str:
        return self.schedule or self.method.default_schedule

    @property
    def variant(self) -> str:
        if self.ls_variant:
            return self.ls_variant
        return "online" if self.method is Method.SLS_ONLINE else "decorrelated_conservative"

    @property
    def seed_list(self) -> list[int]:
        return [self.base_seed + r for r in range(self.seeds)]

    def horizon(self, n: int) -> int:
        return self.T if self.T is not None else 10 * n

    def checkpoint_interval(self, n: int) -> int:
        return self.checkpoint_every if self.checkpoint_every is not None else n

    def rho_grid(self) -> tuple:
        return tuple(self.rho) if self.method.uses_rho else (None,)

    # --- parsing -----------------------------------------------------------

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_string(text)

    @classmethod
    def from_string(cls, text: str) -> ExperimentConfig:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                           delimiters=("=",))
        try:
            parser.read_string(f"[{_SECTION}]\n{text}")
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        return cls.from_mapping({k: v.strip().strip("\"'") for k, v in parser[_SECTION].items()})

    @classmethod
    def from_mapping(cls, raw: dict) -> ExperimentConfig:
        raw = {str(k).lower(): v for k, v in raw.items()}
        kwargs = {}
        ls_kwargs = {}
        for key, value in raw.items():
            if key in _LS_KEYS:
                ls_kwargs[_LS_KEYS[key]] = value
                continue
            if key not in _KEY_PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            name, parse = _KEY_PARSERS[key]
            try:
                kwargs[name] = parse(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
        gm = ls_kwargs.pop("gamma_max", None)
        if gm is not None:
            m = re.fullmatch(r"\s*([0-9.eE+-]+)\s*/\s*L\s*", str(gm))
            if m:
                kwargs["ls_gamma_max_over_L"] = float(m.group(1))
            else:
                ls_kwargs["gamma_max"] = gm
        for key in ("ls_variant", "probe_index"):
            if key in ls_kwargs:
                kwargs[key] = ls_kwargs.pop(key)
        try:
            ls = LineSearchConfig(
                c=float(ls_kwargs.get("c", 0.5)),
                gamma_max=float(ls_kwargs.get("gamma_max", 1.0)),
                shrink=float(ls_kwargs.get("shrink", 0.5)),
                max_backtracks=int(ls_kwargs.get("max_backtracks", 64)),
                mode=LineSearchMode(ls_kwargs.get("mode", "backtrack")),
            )
        except ValueError as exc:
            raise ConfigError(f"bad line-search settings: {exc}") from exc
        return cls(ls=ls, **kwargs)

    def with_overrides(self, **changes) -> ExperimentConfig:
        return replace(self, **changes)

    def header_items(self) -> list[tuple[str, str]]:
        """Every setting as ``(key, value)`` text pairs in a fixed order."""
        items = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "ls":
                items += [("ls.c", repr(v.c)), ("ls.gamma_max", repr(v.gamma_max)), ("ls.shrink", repr(v.shrink)),
                          ("ls.max_backtracks", str(v.max_backtracks)), ("ls.mode", v.mode.value)]
                continue
            if f.name == "method":
                v = v.value
            elif f.name in ("rho", "w1") and v is not None:
                v = ",".join(repr(float(x)) for x in v)
            elif v is None:
                v = "zero" if f.name == "w1" else "default"
            items.append((f.name, str(v)))
        items += [("ls.variant", self.variant), ("schedule_resolved", self.schedule_kind)]
        return items


def _int(v):
    f = float(v)
    if f != int(f):
        raise ValueError(v)
    return int(f)


def _float_or_word(*words):
    def parse(v):
        s = str(v).strip().lower()
        return s if s in words else float(v)
    return parse


def _floats(v):
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


def _w1(v):
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    s = str(v).strip().lower()
    return None if s in ("zero", "zeros", "0", "") else _floats(s)


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _optional_int(v):
    return None if str(v).strip().lower() in ("", "default", "auto") else _int(v)


_KEY_PARSERS = {
    "method": ("method", str),
    "problem": ("problem", lambda v: str(v).lower()),
    "data": ("data", str),
    "loss": ("loss", lambda v: str(v).lower()),
    "lambda": ("lam", float),
    "lam": ("lam", float),
    "n": ("n", _int),
    "d": ("d", _int),
    "condition": ("condition", float),
    "kappa": ("condition", float),
    "noise": ("noise", float),
    "data_seed": ("data_seed", _int),
    "schedule": ("schedule", lambda v: str(v).lower()),
    "beta": ("beta", float),
    "delta": ("delta", float),
    "t": ("T", _optional_int),
    "batch_size": ("batch_size", _int),
    "seeds": ("seeds", _int),
    "base_seed": ("base_seed", _int),
    "checkpoint_every": ("checkpoint_every", _optional_int),
    "l": ("L", _float_or_word("auto")),
    "mu": ("mu", _float_or_word("auto", "exact")),
    "rho": ("rho", _floats),
    "w1": ("w1", _w1),
    "reference": ("reference", _bool),
    "output": ("output", str),
}

_LS_KEYS = {
    "ls.c": "c",
    "ls.gamma_max": "gamma_max",
    "ls.shrink": "shrink",
    "ls.max_backtracks": "max_backtracks",
    "ls.mode": "mode",
    "ls.variant": "ls_variant",
    "ls.probe_index": "probe_index",
}
