"""Frozen library of benchmark problems.

Changing a preset is a breaking change: tests and published tables refer to
these exact definitions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .macro import Dirichlet
from .material import (
    CoefficientModel,
    TemperatureBounds,
    checkerboard_field,
    constant_field,
    layered_field,
    make_model,
    sinusoidal_field,
)


@dataclass
class PresetSpec:
    name: str
    model: CoefficientModel
    bounds: TemperatureBounds
    bc: object
    g: Optional[Callable] = None
    description: str = ""


def _radiative(B: float, dim: int):
    return constant_field(B, dim) if B else None


def _linear_in_x(left: float, right: float):
    return lambda x: left + (right - left) * x[:, 0]


def const(B: float = 0.25, dim: int = 1) -> PresetSpec:
    model = make_model(dim, constant_field(1.0, dim), _radiative(B, dim), name="const")
    return PresetSpec(
        "const", model, TemperatureBounds(1.0, 2.0), Dirichlet(_linear_in_x(1.0, 2.0)),
        description="K = I, B = 0.25 I",
    )


def layered1d(B: float = 0.25) -> PresetSpec:
    model = make_model(1, layered_field([1.0, 4.0], 1), _radiative(B, 1), name="layered1d")
    return PresetSpec(
        "layered1d", model, TemperatureBounds(1.0, 2.0), Dirichlet(_linear_in_x(1.0, 2.0)),
        description="K = 1 on [0, 1/2), 4 on [1/2, 1); B = 0.25 (B = 0 variant via override)",
    )


def smooth1d(B: float = 0.25) -> PresetSpec:
    model = make_model(1, sinusoidal_field(2.0, 1.0, 1), _radiative(B, 1), name="smooth1d")
    return PresetSpec(
        "smooth1d", model, TemperatureBounds(1.0, 2.0), Dirichlet(_linear_in_x(1.0, 2.0)),
        description="K = 2 + sin(2 pi y), B = 0.25",
    )


def checkerboard2d(B: float = 0.0) -> PresetSpec:
    model = make_model(2, checkerboard_field(1.0, 4.0), _radiative(B, 2), name="checkerboard2d")
    return PresetSpec(
        "checkerboard2d", model, TemperatureBounds(1.0, 2.0), Dirichlet(_linear_in_x(1.0, 2.0)),
        description="checkerboard K in {1, 4}, B = 0",
    )


def kirchhoff1d(B: float = 0.25) -> PresetSpec:
    model = make_model(1, constant_field(1.0, 1), _radiative(B, 1), name="kirchhoff1d")
    return PresetSpec(
        "kirchhoff1d", model, TemperatureBounds(1.0, 2.0), Dirichlet(_linear_in_x(1.0, 2.0)),
        description="K = 1, B = 0.25, u(0) = 1, u(1) = 2",
    )


def parabolic_linear(B: float = 0.0) -> PresetSpec:
    model = make_model(1, constant_field(1.0, 1), _radiative(B, 1), name="parabolic-linear")

    def g(x, t):
        return 1.0 + 4.0 * x[:, 0] * (1.0 - x[:, 0])

    return PresetSpec(
        "parabolic-linear", model, TemperatureBounds(1.0, 2.0), Dirichlet(1.0), g=g,
        description="heat equation K = 1, B = 0; u(x, 0) = 1 + 4x(1 - x), u = 1 on the boundary",
    )


PRESETS = {
    "const": const,
    "layered1d": layered1d,
    "smooth1d": smooth1d,
    "checkerboard2d": checkerboard2d,
    "kirchhoff1d": kirchhoff1d,
    "parabolic-linear": parabolic_linear,
}


def preset(name: str, **overrides) -> PresetSpec:
    """Look up a preset; ``overrides`` (``B``, ``dim`` for ``const``) are passed through."""
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}") from None
    return factory(**{k: v for k, v in overrides.items() if v is not None})


def steady_state_boundary(spec: PresetSpec):
    """Boundary data of a preset as a time-independent ``g(x, t)``."""
    bc = spec.bc

    def g(x, t):
        v = bc.value
        return v(x) if callable(v) else np.full(len(x), float(v))

    return g
