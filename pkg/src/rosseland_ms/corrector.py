"""Two-scale expansions, error norms against ε-resolved solutions, and rate fits."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .cell import CellSolution, HomogenizedTable
from .grid import Grid, ScalarField, gradient, interpolate, sample_periodic

CSV_COLUMNS = ("eps", "sup_err", "l2_err", "h1_interior_err", "energy_diff")


@dataclass
class ExpansionField:
    """``u0 + ε N_k ∂_k u0 + ε² M_kl ∂_kl u0`` truncated at ``order`` on a fine grid."""

    order: int
    grid: Grid
    u0: np.ndarray
    first: np.ndarray
    second: np.ndarray

    @property
    def values(self) -> np.ndarray:
        v = self.u0.copy()
        if self.order >= 1:
            v = v + self.first
        if self.order >= 2:
            v = v + self.second
        return v

    def truncated(self, order: int) -> "ExpansionField":
        if order > self.order:
            raise ValueError(f"cannot raise expansion order {self.order} to {order}")
        return ExpansionField(order, self.grid, self.u0, self.first, self.second)

    def as_field(self) -> ScalarField:
        return ScalarField(self.grid, self.values)


def _macro_derivatives(u0: ScalarField, order: int):
    grads = gradient(u0) if order >= 1 else []
    hess = None
    if order >= 2:
        d = u0.grid.dim
        raw = [[gradient(grads[k])[l].values for l in range(d)] for k in range(d)]
        hess = {(k, l): 0.5 * (raw[k][l] + raw[l][k]) for k in range(d) for l in range(d)}
    return grads, hess


def reconstruct(
    u0: ScalarField,
    cell: Union[CellSolution, HomogenizedTable],
    eps: float,
    order: int,
    fine_grid: Grid,
    lookup: str = "linear",
) -> ExpansionField:
    """Asymptotic expansion of ``u_ε`` sampled at the fine-grid nodes.

    ``cell`` is either a single :class:`CellSolution` (correctors frozen at one
    temperature) or a :class:`HomogenizedTable` with stored cells, in which case
    correctors are taken at ``z = u0(x)`` node by node (``lookup`` selects
    'linear' interpolation between samples or the 'nearest' sample).
    """
    if order not in (0, 1, 2):
        raise ValueError(f"expansion order must be 0, 1 or 2, got {order}")
    if u0.grid.dim != fine_grid.dim:
        raise ValueError("u0 and the fine grid differ in dimension")
    x = fine_grid.node_coords
    u0_f = interpolate(u0.grid, u0.values, x)
    n = fine_grid.n_nodes
    first = np.zeros(n)
    second = np.zeros(n)
    if order == 0:
        return ExpansionField(0, fine_grid, u0_f, first, second)

    origin = np.array([a for a, _ in fine_grid.extent])
    y = np.mod((x - origin) / eps, 1.0)
    grads, hess = _macro_derivatives(u0, order)
    g_f = [interpolate(u0.grid, g.values, x) for g in grads]
    if isinstance(cell, HomogenizedTable):
        ns, ms = cell.sample_correctors(u0_f, y, mode=lookup, second_order=order >= 2)
    else:
        if order >= 2 and cell.second_order is None:
            raise ValueError("order 2 requested but the cell solution has no M_kl fields")
        ns = [sample_periodic(cell.grid, c, y) for c in cell.correctors]
        ms = None
        if order >= 2:
            ms = {kl: sample_periodic(cell.grid, m, y) for kl, m in cell.second_order.items()}
    for k, nk in enumerate(ns):
        first += eps * nk * g_f[k]
    if order >= 2:
        for (k, l), mkl in ms.items():
            second += eps ** 2 * mkl * interpolate(u0.grid, hess[(k, l)], x)
    return ExpansionField(order, fine_grid, u0_f, first, second)


@dataclass
class ErrorRow:
    eps: float
    sup_err: float
    l2_err: float
    h1_interior_err: float
    energy_diff: float = float("nan")
    grad_interior_err: float = float("nan")

    def csv_values(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def interior_elements(grid: Grid, fraction: float = 0.5) -> np.ndarray:
    """Mask of elements whose midpoints lie in the centred box of relative side ``fraction``."""
    if not 0 < fraction <= 1:
        raise ValueError("interior fraction must lie in (0, 1]")
    mid = grid.element_midpoints
    mask = np.ones(grid.n_elements, dtype=bool)
    for k, (a, b) in enumerate(grid.extent):
        c, half = 0.5 * (a + b), 0.5 * fraction * (b - a)
        mask &= np.abs(mid[:, k] - c) <= half + 1e-12 * (b - a)
    return mask


def error_norms(
    u_ref: ScalarField,
    approx,
    interior: float = 0.5,
    eps: float = float("nan"),
    energy_ref: Optional[float] = None,
    energy_hom: Optional[float] = None,
) -> ErrorRow:
    """Sup, L² (midpoint rule), interior H¹-seminorm and interior gradient-sup errors."""
    grid = u_ref.grid
    if isinstance(approx, (ExpansionField, ScalarField)):
        if approx.grid != grid:
            raise ValueError("reference and approximation live on different grids")
        vals = approx.values
    else:
        vals = np.asarray(approx, dtype=float)
        if vals.size != grid.n_nodes:
            raise ValueError("approximation size does not match the reference grid")
    diff = u_ref.values - vals
    sup = float(np.abs(diff).max())
    l2 = float(np.sqrt(grid.element_volume * np.sum(grid.element_means(diff) ** 2)))
    mask = interior_elements(grid, interior)
    g = grid.element_gradients(diff)[mask]
    gn2 = np.sum(g * g, axis=1)
    h1 = float(np.sqrt(grid.element_volume * gn2.sum()))
    gsup = float(np.sqrt(gn2.max())) if gn2.size else 0.0
    ediff = float("nan")
    if energy_ref is not None and energy_hom is not None:
        ediff = abs(energy_ref - energy_hom)
    return ErrorRow(float(eps), sup, l2, h1, ediff, gsup)


@dataclass
class RateFit:
    rate: float
    intercept: float
    residual: float
    monotone: bool


def fit_rates(rows: list, columns=("sup_err", "l2_err", "h1_interior_err", "energy_diff", "grad_interior_err")) -> dict:
    """Least-squares slope of ``log(error)`` against ``log(ε)`` per column.

    Non-monotone sequences are still fitted and marked ``monotone=False``;
    columns with non-positive or missing entries are skipped.
    """
    eps = np.array([r.eps for r in rows], dtype=float)
    if len(np.unique(eps)) < 3:
        raise ValueError("rate fits need at least 3 distinct ε values")
    order = np.argsort(eps)
    out = {}
    for col in columns:
        err = np.array([getattr(r, col) for r in rows], dtype=float)
        if not np.all(np.isfinite(err)) or np.any(err <= 0):
            continue
        lx, ly = np.log(eps), np.log(err)
        coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
        resid = float(np.sqrt(res[0] / len(eps))) if res.size else 0.0
        e_sorted = err[order]
        monotone = bool(np.all(np.diff(e_sorted) > 0))
        out[col] = RateFit(float(coef[0]), float(coef[1]), resid, monotone)
    return out


@dataclass
class ErrorReport:
    rows: list
    rates: dict
    interior: float = 0.5
    flags: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: list, interior: float = 0.5) -> "ErrorReport":
        rates = fit_rates(rows)
        flags = [f"non_monotone:{k}" for k, v in rates.items() if not v.monotone]
        return cls(rows, rates, interior, flags)

    def to_dict(self) -> dict:
        return {
            "rows": [asdict(r) for r in self.rows],
            "rates": {k: asdict(v) for k, v in self.rates.items()},
            "interior_fraction": self.interior,
            "flags": list(self.flags),
        }
