"""Flat ``section.key = value`` run configuration with fail-closed parsing."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

EXPERIMENTS = (
    "landau-verify",
    "inequalities",
    "linear-decay",
    "picard",
    "decay",
    "split",
    "weakstrong",
    "continuity",
    "resolvent",
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(where + message)
        self.line = line
        self.key = key


def _positive(kind: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        value = kind(text)
        if not value > 0:
            raise ValueError("must be positive")
        return value

    return parse


def _nonnegative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise ValueError("must be nonnegative")
    return value


def _auto(kind: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        return None if text == "auto" else kind(text)

    return parse


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return text

    return parse


def _list(kind: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        items = [s.strip() for s in text.split(",") if s.strip()]
        if not items:
            raise ValueError("empty list")
        return tuple(kind(s) for s in items)

    return parse


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError("expected true or false")


def _finite(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("must be finite")
    return value


_pos_float = _positive(_finite)
_pos_int = _positive(int)

# key -> (parser, default, description); defaults are given as config text
SCHEMA: dict[str, tuple[Callable[[str], Any], str, str]] = {
    "run.experiment": (_choice(*EXPERIMENTS), "landau-verify", "experiment name"),
    "run.seed": (_nonnegative_int, "0", "master random seed"),
    "run.out": (str, "out", "output directory"),
    "grid.n": (_pos_int, "32", "grid points per axis"),
    "grid.l": (_pos_float, "6.2831853071795862", "box side length"),
    "landau.c": (_finite, "10", "Landau parameter, |c| > 1"),
    "landau.delta": (_auto(_pos_float), "auto", "core regularization radius (auto: 4 h)"),
    "landau.r_in": (_auto(_pos_float), "auto", "window inner radius (auto: L/4)"),
    "landau.r_out": (_auto(_pos_float), "auto", "window outer radius (auto: 0.45 L)"),
    "landau.n_samples": (_pos_int, "10000", "sphere samples for the weighted bound"),
    "landau.check_c": (_list(_finite), "1.5,2,3,10", "c values audited by landau-verify"),
    "evolution.dt": (_pos_float, "0.01", "time step"),
    "evolution.t_end": (_pos_float, "1", "final time"),
    "evolution.scheme": (_choice("imex_euler", "imex_rk2"), "imex_rk2", "time integrator"),
    "evolution.mode": (_choice("full", "linear", "mollified", "split"), "full", "evolution mode"),
    "evolution.eps": (_auto(_pos_float), "auto", "mollifier width (auto: 4 h)"),
    "evolution.snapshot_every": (_pos_int, "10", "steps between snapshots"),
    "evolution.coupling": (_finite, "1", "background coupling factor (0 switches it off)"),
    "data.amplitude": (_pos_float, "0.05", "L3 norm of the initial perturbation"),
    "data.k_peak": (_pos_float, "2", "spectral width of random data, in fundamental modes"),
    "data.n_fields": (_pos_int, "3", "random initial fields per audit"),
    "data.core": (_auto(_pos_float), "auto", "core radius of homogeneous decay data (auto: 2 h)"),
    "inequalities.n_trials": (_pos_int, "20", "random fields per inequality audit"),
    "inequalities.hardy_n": (_pos_int, "64", "grid for the Hardy check"),
    "inequalities.hardy_l": (_pos_float, "16", "box for the Hardy check"),
    "inequalities.riesz_r": (_list(_pos_float), "1.5,2,3,4", "exponents for the Riesz audit"),
    "linear.p_list": (_list(_pos_float), "2,3,6", "L^p norms audited along the linear flow"),
    "linear.c_list": (_list(_finite), "5,10", "background parameters for the linear audit"),
    "picard.tol": (_pos_float, "1e-08", "Picard stopping tolerance"),
    "picard.max_iter": (_pos_int, "10", "maximum Picard iterations"),
    "picard.gate_fraction": (_pos_float, "0.5", "data norm as a fraction of eps0"),
    "constants.n_trials": (_pos_int, "10", "trials for the empirical constants"),
    "constants.n": (_pos_int, "24", "grid for the empirical constants"),
    "constants.t_end": (_pos_float, "0.5", "horizon for the empirical constants"),
    "decay.q_list": (_list(_pos_float), "3,4,6", "decay exponents to audit"),
    "decay.t_min": (_auto(_pos_float), "auto", "fit window start (auto: largest data mode)"),
    "decay.t_box": (_auto(_pos_float), "auto", "box saturation cap (auto: (L/16)^2)"),
    "split.v2_amplitude": (_pos_float, "0.5", "L3 norm of v2 data"),
    "weakstrong.resolutions": (_list(_pos_int), "32,48,64", "grids, consecutive pairs compared"),
    "continuity.scales": (_list(_pos_float), "0.001,0.003,0.01", "perturbation L3 norms"),
    "resolvent.rho": (_list(_pos_float), "0.1,1,10", "resolvent moduli"),
    "resolvent.theta": (_list(_finite), "0,1.0471975511965976,-1.0471975511965976", "resolvent phases"),
    "resolvent.q": (_list(_pos_float), "2,3", "norm exponents for the resolvent ratio"),
    "resolvent.sector_angle": (_pos_float, "0.1", "sector half-opening beyond pi/2"),
}


def _format(value: Any) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: tuple[tuple[str, Any], ...]

    def __getitem__(self, key: str) -> Any:
        return dict(self.values)[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(self.values)

    @property
    def experiment(self) -> str:
        return self["run.experiment"]

    @property
    def seed(self) -> int:
        return self["run.seed"]

    def replace(self, **updates: Any) -> RunConfig:
        d = self.as_dict()
        for k, v in updates.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}", key=key)
            d[key] = v
        return RunConfig(tuple(sorted(d.items())))


def defaults() -> RunConfig:
    return RunConfig(tuple(sorted((k, spec[0](spec[1])) for k, spec in SCHEMA.items())))


def parse_text(text: str) -> RunConfig:
    values = defaults().as_dict()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got {raw.strip()!r}", line=lineno)
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno, key=key)
        seen.add(key)
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"invalid value for {key!r}: {exc}", line=lineno, key=key) from None
    if abs(values["landau.c"]) <= 1:
        raise ConfigError("invalid value for 'landau.c': need |c| > 1", key="landau.c")
    return RunConfig(tuple(sorted(values.items())))


def parse_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_text(text)


def echo(cfg: RunConfig) -> str:
    """Every key with its effective value, in a form ``parse_text`` reads back."""
    return "".join(f"{k} = {_format(v)}\n" for k, v in cfg.values)


def defaults_table() -> str:
    """Markdown table of keys, defaults and meanings."""
    rows = ["| key | default | meaning |", "|---|---|---|"]
    rows += [f"| `{k}` | `{d}` | {doc} |" for k, (_, d, doc) in SCHEMA.items()]
    return "\n".join(rows) + "\n"
