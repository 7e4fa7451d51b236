"""Rosseland coefficient law ``A(z, y) = K(y) + 4 z**3 B(y)``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

TensorFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TemperatureBounds:
    """Admissible temperature box ``[T_min, T_max + C_*]``."""

    T_min: float
    T_max: float
    source_slack: float = 0.0

    def __post_init__(self):
        if not self.T_min > 0:
            raise ValueError(f"T_min must be positive, got {self.T_min}")
        if self.T_max < self.T_min:
            raise ValueError(f"T_max ({self.T_max}) must be >= T_min ({self.T_min})")
        if self.source_slack < 0:
            raise ValueError(f"source slack C_* must be nonnegative, got {self.source_slack}")

    @property
    def upper(self) -> float:
        return self.T_max + self.source_slack


def _tensorize(values: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        return v[:, None, None] * np.eye(dim)
    return v


def _wrap(y: np.ndarray) -> np.ndarray:
    return np.mod(y, 1.0)


@dataclass(frozen=True)
class CoefficientModel:
    """Cell-periodic conductive part ``K`` and radiative part ``B``.

    ``K`` and ``B`` map cell points of shape ``(m, dim)`` to tensors of shape
    ``(m, dim, dim)``.  Points are wrapped into ``[0, 1)**dim`` first.
    """

    dim: int
    K: TensorFn
    B: TensorFn
    name: str = "custom"
    radiative: bool = True
    meta: dict = field(default_factory=dict, compare=False)

    def conductive(self, y: np.ndarray) -> np.ndarray:
        return self.K(_wrap(np.atleast_2d(y)))

    def radiative_part(self, y: np.ndarray) -> np.ndarray:
        return self.B(_wrap(np.atleast_2d(y)))

    def shifted(self, offset) -> "CoefficientModel":
        """Model translated by ``offset`` in the cell: ``y -> y + offset``."""
        off = np.asarray(offset, dtype=float)
        return CoefficientModel(
            self.dim,
            lambda y: self.K(_wrap(y + off)),
            lambda y: self.B(_wrap(y + off)),
            name=f"{self.name}+shift",
            radiative=self.radiative,
        )


def _check_z(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(~(z > 0)):
        raise ValueError(f"temperature must be positive, got min {np.min(z)}")
    return z


def eval_coefficient(model: CoefficientModel, z, y) -> np.ndarray:
    """``K(y) + 4 z³ B(y)``; vectorized over points (``z`` scalar or per point)."""
    z = _check_z(z)
    single = np.ndim(y) == 1 or (np.ndim(y) == 0)
    y = np.atleast_2d(np.asarray(y, dtype=float).reshape(-1, model.dim))
    a = model.conductive(y) + 4.0 * (z ** 3)[..., None, None] * model.radiative_part(y)
    return a[0] if single else a


def eval_coefficient_derivative(model: CoefficientModel, z, y) -> np.ndarray:
    """``d/dz A(z, y) = 12 z² B(y)``."""
    z = _check_z(z)
    single = np.ndim(y) == 1 or (np.ndim(y) == 0)
    y = np.atleast_2d(np.asarray(y, dtype=float).reshape(-1, model.dim))
    a = 12.0 * (z ** 2)[..., None, None] * model.radiative_part(y)
    return a[0] if single else a


def coefficient_bounds(model: CoefficientModel, bounds: TemperatureBounds, points: np.ndarray):
    """Ellipticity constants ``(λ, Λ)`` over the sampled cell points.

    ``z -> A(z, y)`` is nondecreasing in the PSD order, so the smallest
    eigenvalue is attained at ``T_min`` and the largest at ``T_max + C_*``.
    """
    pts = np.atleast_2d(points)
    lo = np.linalg.eigvalsh(eval_coefficient(model, np.full(len(pts), bounds.T_min), pts))
    hi = np.linalg.eigvalsh(eval_coefficient(model, np.full(len(pts), bounds.upper), pts))
    lam, Lam = float(lo[:, 0].min()), float(hi[:, -1].max())
    if not lam > 0:
        raise ValueError(f"coefficient is not uniformly elliptic (λ = {lam:.3e})")
    return lam, Lam


# -- closed-form coefficient fields -------------------------------------------


def constant_field(value, dim: int) -> TensorFn:
    t = np.asarray(value, dtype=float)
    t = t * np.eye(dim) if t.ndim == 0 else t

    def fn(y):
        return np.broadcast_to(t, (len(y), dim, dim)).copy()

    return fn


def layered_field(values, dim: int, axis: int = 0) -> TensorFn:
    """Scalar layers of equal width along ``axis``."""
    vals = np.asarray(values, dtype=float)

    def fn(y):
        idx = np.minimum((y[:, axis] * len(vals)).astype(int), len(vals) - 1)
        return _tensorize(vals[idx], dim)

    return fn


def checkerboard_field(a1: float, a2: float) -> TensorFn:
    """2D checkerboard: ``a1`` where ``floor(2y1) + floor(2y2)`` is even."""

    def fn(y):
        parity = (np.floor(2 * y[:, 0]) + np.floor(2 * y[:, 1])).astype(int) % 2
        return _tensorize(np.where(parity == 0, a1, a2), 2)

    return fn


def sinusoidal_field(mean: float, amplitude: float, dim: int, axis: int = 0) -> TensorFn:
    def fn(y):
        return _tensorize(mean + amplitude * np.sin(2 * np.pi * y[:, axis]), dim)

    return fn


def cellwise_field(values: np.ndarray, dim: int) -> TensorFn:
    """Piecewise constant on a uniform cell grid; ``values`` shaped like the cells.

    Trailing ``(dim, dim)`` axes give full tensors, otherwise scalars.
    """
    vals = np.asarray(values, dtype=float)
    tensor = vals.ndim == dim + 2
    shape = vals.shape[:dim]

    def fn(y):
        idx = tuple(
            np.minimum((y[:, k] * shape[k]).astype(int), shape[k] - 1) for k in range(dim)
        )
        v = vals[idx]
        return v if tensor else _tensorize(v, dim)

    return fn


def make_model(
    dim: int,
    K: TensorFn,
    B: Optional[TensorFn] = None,
    name: str = "custom",
    **meta,
) -> CoefficientModel:
    radiative = B is not None
    if B is None:
        B = constant_field(0.0, dim)
    return CoefficientModel(dim, K, B, name=name, radiative=radiative, meta=meta)


def cellwise_model(K_cells: np.ndarray, B_cells: Optional[np.ndarray] = None, dim: int = 1) -> CoefficientModel:
    B = None if B_cells is None else cellwise_field(B_cells, dim)
    if B_cells is not None and not np.any(np.asarray(B_cells)):
        B = None
    return make_model(dim, cellwise_field(K_cells, dim), B, name="cellwise")
