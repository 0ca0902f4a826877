"""Experiment configuration: INI sections with a fixed key schema.

Every key is declared in :data:`SCHEMA` with its parser; unknown sections or
keys are rejected so that typos fail before any computation starts.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, SRTLabError
from .laws import FAMILIES, SUPPORTS, TailSpec


def _int(v: str) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _float(v: str) -> float:
    return float(v)


def _floats(v: str) -> tuple:
    out = tuple(float(s) for s in v.replace(",", " ").split())
    if not out:
        raise ValueError("empty list")
    return out


def _table(v: str) -> tuple:
    return tuple(float(s) for s in v.replace(",", " ").split())


def _ints(v: str) -> tuple:
    out = tuple(_int(s) for s in v.replace(",", " ").split())
    if not out:
        raise ValueError("empty list")
    return out


def _choice(*opts):
    def parse(v: str) -> str:
        if v not in opts:
            raise ValueError(f"expected one of {', '.join(opts)}")
        return v
    return parse


SCHEMA: dict[str, dict[str, tuple]] = {
    "law": {
        "family": (_choice(*FAMILIES), "pure-power"),
        "alpha": (_float, 0.7),
        "support": (_choice(*SUPPORTS), "nonnegative"),
        "beta_l": (_float, 0.0),
        "osc_amplitude": (_float, 0.0),
        "osc_exponent": (_float, 0.5),
        "spike_c": (_float, 4.0),
        "spike_k0": (_int, 6),
        "table": (_table, ()),
    },
    "run": {
        "seed": (_int, 12345),
    },
    "renewal": {
        "xmax": (_int, 1 << 20),
        "method": (_choice("fast", "naive"), "fast"),
    },
    "grids": {
        "x_lo": (_float, 1e3),
        "x_hi": (_float, 1e6),
        "per_decade": (_int, 4),
        "deltas": (_floats, (0.2, 0.1, 0.05, 0.02)),
        "n_range": (_ints, (20, 50, 100, 200)),
        "theta_range": (_floats, (5.0, 10.0, 20.0, 50.0)),
    },
    "srt": {
        "tolerance": (_float, 0.10),
        "decades": (_floats, (1e4, 1e5, 1e6)),
    },
    "conditions": {
        "expect": (_choice("hold", "fail"), "hold"),
        "n0": (_int, 10),
        "x": (_int, 10 ** 6),
        "rz_floor": (_float, 0.1),
        "spike_factor": (_float, 2.0),
        "spikes": (_int, 4),
    },
    "lld": {
        "gamma": (_float, 0.5),
        "slope_tol": (_float, 0.05),
    },
    "tilt": {
        "n": (_ints, (5, 10, 20)),
        "x": (_ints, (500, 1000, 2000)),
        "gamma": (_floats, (0.3, 0.5, 1.0)),
        "tolerance": (_float, 1e-10),
    },
    "green": {
        "beta": (_float, 1.0),
        "beta_l": (_float, 0.0),
        "nmax": (_int, 400),
        "tolerance": (_float, 0.15),
    },
    "oracle": {
        "samples": (_int, 10 ** 6),
        "y": (_floats, (0.5, 1.0, 2.0)),
        "beta": (_floats, (0.0, 1.0)),
        "gnedenko_n": (_int, 10 ** 4),
    },
}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(e) for e in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed configuration; ``values[section][key]`` holds typed values."""

    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    def with_seed(self, seed: int) -> "ExperimentConfig":
        vals = {s: dict(d) for s, d in self.values.items()}
        vals["run"]["seed"] = int(seed)
        return ExperimentConfig(vals)

    def tail_spec(self) -> TailSpec:
        law = self.values["law"]
        try:
            return TailSpec.from_config({k: _fmt(v) for k, v in law.items()})
        except SRTLabError:
            raise
        except (ValueError, TypeError) as e:
            raise ConfigurationError(f"[law]: {e}") from e

    def to_ini(self) -> str:
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}
                for s, d in self.values.items()}

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()


def parse_config(text: str = "") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigurationError(f"config parse error: {e}") from e
    unknown = [s for s in cp.sections() if s not in SCHEMA]
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(unknown)}")
    vals: dict = {}
    for section, keys in SCHEMA.items():
        vals[section] = {k: d for k, (_, d) in keys.items()}
        if not cp.has_section(section):
            continue
        for key, raw in cp.items(section):
            if key not in keys:
                raise ConfigurationError(f"unknown key [{section}] {key}")
            parser = keys[key][0]
            try:
                vals[section][key] = parser(raw.strip())
            except ValueError as e:
                raise ConfigurationError(f"bad value for [{section}] {key} = {raw!r}: {e}") from e
    cfg = ExperimentConfig(vals)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigurationError(f"cannot read config: {e}") from e
    return parse_config(text)


def _validate(cfg: ExperimentConfig) -> None:
    cfg.tail_spec()  # family parameter ranges
    g = cfg["grids"]
    if not 1 <= g["x_lo"] < g["x_hi"]:
        raise ConfigurationError("[grids] need 1 <= x_lo < x_hi")
    if g["per_decade"] < 1:
        raise ConfigurationError("[grids] per_decade must be >= 1")
    if any(not 0 < d < 1 for d in g["deltas"]):
        raise ConfigurationError("[grids] deltas must lie in (0, 1)")
    if any(n < 1 for n in g["n_range"]) or any(t <= 0 for t in g["theta_range"]):
        raise ConfigurationError("[grids] n_range and theta_range must be positive")
    if cfg["renewal"]["xmax"] < 8:
        raise ConfigurationError("[renewal] xmax must be >= 8")
    if cfg["green"]["beta"] <= -2:
        raise ConfigurationError("[green] beta must exceed -2")
    if cfg["oracle"]["samples"] < 1:
        raise ConfigurationError("[oracle] samples must be >= 1")
    if cfg["lld"]["gamma"] <= 0 or any(gm <= 0 for gm in cfg["tilt"]["gamma"]):
        raise ConfigurationError("gamma values must be positive")
    if cfg["conditions"]["n0"] < 1 or cfg["conditions"]["spikes"] < 1:
        raise ConfigurationError("[conditions] n0 and spikes must be >= 1")
