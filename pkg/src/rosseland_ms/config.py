"""INI run configuration: parsing, line-referenced validation, problem assembly."""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .macro import Dirichlet, Robin, SolverConfig, SourceTerm
from .material import CoefficientModel, TemperatureBounds, cellwise_model, coefficient_bounds
from .parabolic import TimeGrid
from .presets import PRESETS, preset

COMMANDS = ("cell", "macro", "fine", "study", "parabolic")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based or None when the key is absent."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


def _number(text: str) -> float:
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError):
        raise ValueError(f"not a number: {text!r}") from None


def _integer(text: str) -> int:
    v = _number(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _boolean(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _numbers(text: str) -> list:
    return [_number(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _cells(text: str) -> list:
    # rows separated by ';' give a 2D array
    rows = [r for r in text.split(";") if r.strip()]
    data = [[_number(v) for v in r.split(",") if v.strip()] for r in rows]
    if len(data) > 1 and len({len(r) for r in data}) != 1:
        raise ValueError("ragged cell array")
    return data[0] if len(data) == 1 else data


def _choice(*options):
    def parse(text: str) -> str:
        t = text.strip()
        if t not in options:
            raise ValueError(f"{t!r} is not one of {', '.join(options)}")
        return t

    return parse


SCHEMA = {
    "problem": {
        "preset": _choice(*PRESETS),
        "B": _number,
        "dim": _integer,
        "K_cells": _cells,
        "B_cells": _cells,
        "coefficient": _choice("homogenized", "plain"),
    },
    "grid": {"cells": _integer, "cell_cells": _integer},
    "bounds": {"T_min": _number, "T_max": _number, "source_slack": _number},
    "bc": {
        "kind": _choice("dirichlet", "robin"),
        "left": _number,
        "right": _number,
        "value": _number,
        "alpha": _number,
        "u_gas": _number,
    },
    "source": {"f": _number},
    "solver": {
        "scheme": _choice("picard", "newton"),
        "tol": _number,
        "max_iter": _integer,
        "linear_tol": _number,
        "relaxation": _number,
        "audit_slack": _number,
    },
    "table": {"samples": _integer, "second_order": _boolean},
    "study": {
        "eps": _numbers,
        "cells_per_period": _integer,
        "macro_cells": _integer,
        "order": _integer,
        "lookup": _choice("linear", "nearest"),
        "interior": _number,
    },
    "fine": {"eps": _number, "cells_per_period": _integer},
    "parabolic": {"horizon": _number, "step": _number, "delay": _number, "snapshot_every": _integer},
    "output": {"figures": _boolean},
}

DEFAULTS = {
    "grid": {"cells": 64, "cell_cells": 32},
    "table": {"samples": 33, "second_order": False},
    "study": {
        "eps": [1 / 8, 1 / 16, 1 / 32],
        "cells_per_period": 16,
        "order": 1,
        "lookup": "linear",
        "interior": 0.5,
    },
    "fine": {"eps": 1 / 8, "cells_per_period": 16},
    "parabolic": {"horizon": 0.1, "step": 1e-3, "snapshot_every": 10},
    "output": {"figures": True},
    "problem": {"coefficient": "homogenized"},
}

_COMMON = ("problem", "bounds", "bc", "source", "solver", "output")
SECTIONS_USED = {
    "cell": _COMMON + ("grid", "table"),
    "macro": _COMMON + ("grid", "table"),
    "fine": _COMMON + ("fine",),
    "study": _COMMON + ("table", "study"),
    "parabolic": _COMMON + ("grid", "parabolic"),
}

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^([^\s=:#;][^=:]*?)\s*[=:]")


def _line_map(text: str) -> dict:
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        m = _SECTION.match(raw)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, None), n)
            continue
        m = _KEY.match(raw)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), n)
    return lines


@dataclass
class RunConfig:
    """Typed configuration plus the problem objects built from it."""

    command: str
    values: dict
    lines: dict = field(default_factory=dict, repr=False)
    model: Optional[CoefficientModel] = None
    bounds: Optional[TemperatureBounds] = None
    bc: object = None
    f: Optional[SourceTerm] = None
    solver: Optional[SolverConfig] = None
    g: object = None

    def get(self, section: str, key: str, default=None):
        v = self.values.get(section, {}).get(key)
        if v is None:
            v = DEFAULTS.get(section, {}).get(key, default)
        return v

    def fail(self, section: str, key: str, message: str):
        raise ConfigError(f"[{section}] {key}: {message}", key, self.lines.get((section, key)))

    def echo(self) -> dict:
        """Explicit values and applied defaults of the sections this command reads."""
        out = {"command": self.command}
        for sec, keys in SCHEMA.items():
            if sec not in SECTIONS_USED[self.command]:
                continue
            d = {}
            for k in keys:
                v = self.get(sec, k)
                if v is not None:
                    d[k] = v
            if d:
                out[sec] = d
        return out


def parse_text(text: str, command: str, source: str = "<config>") -> RunConfig:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.option, exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.section, exc.lineno) from None
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"malformed config: {exc.message.splitlines()[0]}", None, line) from None

    lines = _line_map(text)
    values = {}
    for sec in parser.sections():
        if sec not in SCHEMA:
            raise ConfigError(
                f"unknown section [{sec}]; known: {', '.join(SCHEMA)}", sec, lines.get((sec, None))
            )
        values[sec] = {}
        for key, raw in parser.items(sec):
            line = lines.get((sec, key))
            if key not in SCHEMA[sec]:
                raise ConfigError(
                    f"unknown key {key!r} in [{sec}]; known: {', '.join(SCHEMA[sec])}", key, line
                )
            try:
                values[sec][key] = SCHEMA[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{sec}] {key}: {exc}", key, line) from None
    cfg = RunConfig(command, values, lines)
    _build(cfg)
    return cfg


def load_config(path, command: str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_text(text, command, str(path))


def _positive(cfg, sec, key):
    v = cfg.get(sec, key)
    if v is None:
        return None
    if not v > 0:
        cfg.fail(sec, key, f"must be positive, got {v}")
    return v


def _tiles_unit(cfg, sec, key, eps):
    n = 1.0 / eps
    if abs(n - round(n)) > 1e-9 * n:
        cfg.fail(sec, key, f"ε = {eps} does not tile the unit domain by whole periods")


def _model(cfg: RunConfig):
    p = cfg.values.get("problem", {})
    name = p.get("preset")
    if "K_cells" in p:
        if name is not None:
            cfg.fail("problem", "K_cells", "give either a preset or K_cells, not both")
        K = np.asarray(p["K_cells"], dtype=float)
        dim = K.ndim
        if dim not in (1, 2):
            cfg.fail("problem", "K_cells", "expected a list (1D) or ';'-separated rows (2D)")
        if np.any(K <= 0):
            cfg.fail("problem", "K_cells", "conductivities must be positive")
        B = None
        if "B_cells" in p:
            B = np.asarray(p["B_cells"], dtype=float)
            if B.shape != K.shape:
                cfg.fail("problem", "B_cells", f"shape {B.shape} does not match K_cells {K.shape}")
            if np.any(B < 0):
                cfg.fail("problem", "B_cells", "radiative factors must be nonnegative")
        elif "B" in p:
            B = np.full(K.shape, p["B"])
        return cellwise_model(K, B, dim), None
    if name is None:
        cfg.fail("problem", "preset", "missing; give a preset name or K_cells")
    if "B_cells" in p:
        cfg.fail("problem", "B_cells", "only valid together with K_cells")
    overrides = {}
    if "B" in p:
        if p["B"] < 0:
            cfg.fail("problem", "B", "must be nonnegative")
        overrides["B"] = p["B"]
    if "dim" in p:
        if name != "const":
            cfg.fail("problem", "dim", "only the const preset takes a dimension")
        if p["dim"] not in (1, 2):
            cfg.fail("problem", "dim", "must be 1 or 2")
        overrides["dim"] = p["dim"]
    spec = preset(name, **overrides)
    return spec.model, spec


def _boundary(cfg: RunConfig, spec, bounds: TemperatureBounds):
    b = cfg.values.get("bc")
    if not b:
        if spec is None:
            cfg.fail("bc", "kind", "missing; custom coefficients need a boundary condition")
        return spec.bc
    kind = b.get("kind", "dirichlet")
    if kind == "dirichlet":
        for k in ("alpha", "u_gas"):
            if k in b:
                cfg.fail("bc", k, "only valid for kind = robin")
        if "value" in b and ("left" in b or "right" in b):
            cfg.fail("bc", "value", "give either value or left/right")
        if "value" in b:
            data = [("value", b["value"])]
            bc = Dirichlet(b["value"])
        elif "left" in b and "right" in b:
            data = [("left", b["left"]), ("right", b["right"])]
            lo, hi = b["left"], b["right"]
            bc = Dirichlet(lambda x: lo + (hi - lo) * x[:, 0])
        else:
            cfg.fail("bc", "left" if "left" not in b else "right", "missing; Dirichlet data needs value or left and right")
        for k, v in data:
            if not bounds.T_min <= v <= bounds.T_max:
                cfg.fail("bc", k, f"{v} lies outside [T_min, T_max] = [{bounds.T_min}, {bounds.T_max}]")
        return bc
    for k in ("value", "left", "right"):
        if k in b:
            cfg.fail("bc", k, "only valid for kind = dirichlet")
    for k in ("alpha", "u_gas"):
        if k not in b:
            cfg.fail("bc", k, "missing for kind = robin")
    if not b["alpha"] > 0:
        cfg.fail("bc", "alpha", "must be positive")
    if not bounds.T_min <= b["u_gas"] <= bounds.T_max:
        cfg.fail("bc", "u_gas", f"{b['u_gas']} lies outside [T_min, T_max]")
    return Robin(b["alpha"], b["u_gas"])


def _build(cfg: RunConfig) -> None:
    model, spec = _model(cfg)
    dim = model.dim

    bsec = cfg.values.get("bounds", {})
    T_min = bsec.get("T_min", spec.bounds.T_min if spec else None)
    T_max = bsec.get("T_max", spec.bounds.T_max if spec else None)
    for k, v in (("T_min", T_min), ("T_max", T_max)):
        if v is None:
            cfg.fail("bounds", k, "missing; custom coefficients need explicit bounds")
    if not T_min > 0:
        cfg.fail("bounds", "T_min", "must be positive")
    if not T_max >= T_min:
        cfg.fail("bounds", "T_max", f"must be at least T_min = {T_min}")
    slack = bsec.get("source_slack", 0.0)
    if slack < 0:
        cfg.fail("bounds", "source_slack", "must be nonnegative")
    bounds = TemperatureBounds(T_min, T_max, slack)

    for k in ("cells", "cell_cells"):
        _positive(cfg, "grid", k)
    probe = np.random.default_rng(0).random((257, dim))
    try:
        coefficient_bounds(model, bounds, probe)
    except ValueError as exc:
        cfg.fail("problem", "preset" if spec else "K_cells", str(exc))

    f = None
    if "f" in cfg.values.get("source", {}):
        fv = cfg.values["source"]["f"]
        if fv < 0:
            cfg.fail("source", "f", "must be nonnegative")
        f = SourceTerm.constant(fv) if fv > 0 else None

    s = cfg.values.get("solver", {})
    try:
        solver = SolverConfig(**s)
    except ValueError as exc:
        key = next((k for k in s if k in str(exc)), next(iter(s), "scheme"))
        cfg.fail("solver", key, str(exc))

    cmd = cfg.command
    if cmd in ("cell", "macro", "study"):
        if cfg.get("table", "samples") < 2:
            cfg.fail("table", "samples", "need at least 2 temperature samples")
    if cmd == "study":
        eps = cfg.get("study", "eps")
        if len(eps) < 1:
            cfg.fail("study", "eps", "empty list")
        for e in eps:
            if not e > 0:
                cfg.fail("study", "eps", f"entries must be positive, got {e}")
            _tiles_unit(cfg, "study", "eps", e)
        _positive(cfg, "study", "cells_per_period")
        _positive(cfg, "study", "macro_cells")
        if cfg.get("study", "order") not in (0, 1, 2):
            cfg.fail("study", "order", "must be 0, 1 or 2")
        if not 0 < cfg.get("study", "interior") <= 1:
            cfg.fail("study", "interior", "must lie in (0, 1]")
    if cmd == "fine":
        e = cfg.get("fine", "eps")
        if not e > 0:
            cfg.fail("fine", "eps", "must be positive")
        _tiles_unit(cfg, "fine", "eps", e)
        _positive(cfg, "fine", "cells_per_period")

    g = None
    if cmd == "parabolic":
        h = cfg.get("parabolic", "horizon")
        dt = cfg.get("parabolic", "step")
        try:
            TimeGrid(h, dt)
        except ValueError as exc:
            cfg.fail("parabolic", "step" if "step" in cfg.values.get("parabolic", {}) else "horizon", str(exc))
        _positive(cfg, "parabolic", "delay")
        _positive(cfg, "parabolic", "snapshot_every")
        if cfg.values.get("bc", {}).get("kind") == "robin":
            cfg.fail("bc", "kind", "the time-dependent solver takes Dirichlet data only")
        if f is not None:
            cfg.fail("source", "f", "the time-dependent solver has no source term")
        g = spec.g if spec is not None and spec.g is not None and "bc" not in cfg.values else None

    bc = _boundary(cfg, spec, bounds)
    cfg.model, cfg.bounds, cfg.bc, cfg.f, cfg.solver, cfg.g = model, bounds, bc, f, solver, g
