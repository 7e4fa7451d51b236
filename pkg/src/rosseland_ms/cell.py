"""Periodic cell problems, correctors and homogenized coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import (
    Grid,
    SparseSystem,
    assemble_diffusion,
    element_stiffness,
    sample_periodic,
    shape_gradient_integrals,
    solve_cg,
)
from .material import CoefficientModel, TemperatureBounds, eval_coefficient, eval_coefficient_derivative


class SolvabilityError(ValueError):
    """Cell data violates the zero-mean compatibility condition."""


@dataclass
class CellSolution:
    """Correctors ``N_j`` (and optionally ``M_kl``) at temperature ``z``."""

    z: float
    grid: Grid
    correctors: list
    second_order: Optional[dict] = None
    a0: Optional[np.ndarray] = None
    iterations: list = field(default_factory=list)

    def corrector_gradients(self) -> list:
        return [self.grid.element_gradients(n) for n in self.correctors]


def cell_tensors(model: CoefficientModel, z: float, grid: Grid) -> np.ndarray:
    """``A(z, y)`` at element midpoints of the cell grid."""
    y = grid.element_midpoints
    return eval_coefficient(model, np.full(len(y), float(z)), y)


def _check_cell_grid(grid: Grid) -> None:
    if not grid.fully_periodic:
        raise ValueError("cell problems need a grid periodic on every axis")


def _load_vector(grid: Grid, vec: Optional[np.ndarray], d, d_on: str) -> np.ndarray:
    b = np.zeros(grid.n_nodes)
    conn = grid.element_nodes
    if vec is not None:
        s = shape_gradient_integrals(grid)  # (nen, dim)
        np.add.at(b, conn, np.asarray(vec) @ s.T)
    if d is not None:
        d = np.asarray(d, dtype=float)
        if d_on == "nodes":
            b += grid.lumped_mass * d
        elif d_on == "elements":
            share = grid.element_volume / conn.shape[1]
            np.add.at(b, conn, np.repeat((d * share)[:, None], conn.shape[1], axis=1))
        else:
            raise ValueError(f"d_on must be 'nodes' or 'elements', got {d_on!r}")
    return b


def _integral(grid: Grid, d, d_on: str) -> tuple:
    d = np.asarray(d, dtype=float)
    if d_on == "nodes":
        w = grid.lumped_mass
    else:
        w = np.full(grid.n_elements, grid.element_volume)
    return float(np.sum(w * d)), float(np.sum(w * np.abs(d)))


def solve_general_cell(
    A: np.ndarray,
    vector_data: Optional[np.ndarray],
    d,
    grid: Grid,
    d_on: str = "nodes",
    tol: float = 1e-13,
):
    """Zero-mean periodic ``P`` with ``∫ A∇P·∇φ = ∫ B·∇φ + ∫ d φ`` for all periodic φ.

    ``A`` is given per element, ``vector_data`` (the field B) per element with
    shape ``(n_e, dim)``, and ``d`` on nodes or elements.  Raises
    :class:`SolvabilityError` unless ``∫_Y d`` vanishes.

    Returns ``(P, iterations)``.
    """
    _check_cell_grid(grid)
    if d is not None:
        total, scale = _integral(grid, d, d_on)
        if abs(total) > 1e-10 * max(1.0, scale):
            raise SolvabilityError(f"∫_Y d = {total:.3e} must vanish for a periodic solution")
    system = assemble_diffusion(grid, A)
    rhs = _load_vector(grid, vector_data, d, d_on)
    p, its = solve_cg(SparseSystem(system.matrix, rhs), tol=tol, singular=True)
    return p, its


def cell_flux(A: np.ndarray, P: np.ndarray, vector_data: Optional[np.ndarray], grid: Grid) -> np.ndarray:
    """``ζ = A∇P - B`` at element midpoints."""
    zeta = np.einsum("eij,ej->ei", A, grid.element_gradients(P))
    if vector_data is not None:
        zeta = zeta - vector_data
    return zeta


def solve_cell(model: CoefficientModel, z: float, grid: Grid, tol: float = 1e-13) -> CellSolution:
    """First-order correctors: ``∫_Y A(z)∇(N_j + y_j)·∇φ = 0``."""
    _check_cell_grid(grid)
    if grid.dim != model.dim:
        raise ValueError(f"cell grid is {grid.dim}D but the model is {model.dim}D")
    A = cell_tensors(model, z, grid)
    correctors, its = [], []
    for j in range(grid.dim):
        n_j, it = solve_general_cell(A, -A[:, :, j], None, grid, tol=tol)
        correctors.append(n_j)
        its.append(it)
    return CellSolution(float(z), grid, correctors, iterations=its)


def homogenized_tensor(model: CoefficientModel, z: float, cell: CellSolution) -> np.ndarray:
    """``a0_ij = ∫_Y a_ij + a_il ∂N_j/∂y_l`` with midpoint quadrature."""
    grid = cell.grid
    A = cell_tensors(model, z, grid)
    d = grid.dim
    a0 = np.empty((d, d))
    for j, g in enumerate(cell.corrector_gradients()):
        flux = A[:, :, j] + np.einsum("eil,el->ei", A, g)
        a0[:, j] = grid.element_volume * flux.sum(axis=0)
    a0 = 0.5 * (a0 + a0.T)
    if not np.all(np.linalg.eigvalsh(a0) > 0):
        raise RuntimeError(f"homogenized tensor is not SPD: {a0.tolist()}")
    return a0


def _second_order_data(A, grads, n_mid, a0, k, l):
    """Symmetrized (in k, l) volume and vector data of the M_kl cell problem."""
    vol_kl = A[:, k, l] + np.einsum("em,em->e", A[:, k, :], grads[l])
    vol_lk = A[:, l, k] + np.einsum("em,em->e", A[:, l, :], grads[k])
    d = 0.5 * (vol_kl + vol_lk) - a0[k, l]
    vec = -0.5 * (A[:, :, l] * n_mid[k][:, None] + A[:, :, k] * n_mid[l][:, None])
    return vec, d


def solve_second_order(
    model: CoefficientModel, z: float, cell: CellSolution, a0: np.ndarray, tol: float = 1e-13
) -> CellSolution:
    """Second-order correctors ``M_kl`` (zero mean, periodic).

    Each ``M_kl`` solves ``-div(A∇M_kl) = a_kl - a0_kl + a_km ∂_m N_l + ∂_m(a_ml N_k)``
    (symmetrized in k, l), whose right-hand side integrates to zero by the
    definition of ``a0``.
    """
    grid = cell.grid
    A = cell_tensors(model, z, grid)
    grads = cell.corrector_gradients()
    n_mid = [grid.element_means(n) for n in cell.correctors]
    a0 = np.asarray(a0, dtype=float)
    out = {}
    for k in range(grid.dim):
        for l in range(k, grid.dim):
            vec, d = _second_order_data(A, grads, n_mid, a0, k, l)
            rhs = _load_vector(grid, vec, d, "elements")
            if abs(rhs.sum()) > 1e-8 * max(np.linalg.norm(rhs), 1e-300) and np.linalg.norm(rhs) > 1e-14:
                raise SolvabilityError(
                    f"M_{k + 1}{l + 1} right-hand side has mean {rhs.sum():.3e}; a0 inconsistent with N"
                )
            m, _ = solve_general_cell(A, vec, d, grid, d_on="elements", tol=tol)
            out[(k, l)] = m
            out[(l, k)] = m
    return CellSolution(cell.z, grid, cell.correctors, second_order=out, a0=a0, iterations=cell.iterations)


def solve_cell_full(model, z, grid, second_order=False, tol=1e-13) -> CellSolution:
    cell = solve_cell(model, z, grid, tol=tol)
    a0 = homogenized_tensor(model, z, cell)
    if second_order:
        return solve_second_order(model, z, cell, a0, tol=tol)
    cell.a0 = a0
    return cell


class HomogenizedTable:
    """Sampled ``z -> A0(z)`` with componentwise piecewise-linear interpolation.

    Temperatures outside the sampled range are clamped to the end samples.
    """

    def __init__(self, z: np.ndarray, a0: np.ndarray, cells: Optional[list] = None):
        self.z = np.asarray(z, dtype=float)
        self.a0 = np.asarray(a0, dtype=float)
        if self.z.ndim != 1 or self.z.size < 2 or np.any(np.diff(self.z) <= 0):
            raise ValueError("table temperatures must be strictly increasing with >= 2 samples")
        self.cells = cells
        self.dim = self.a0.shape[-1]

    def _locate(self, z):
        z = np.clip(np.asarray(z, dtype=float), self.z[0], self.z[-1])
        k = np.clip(np.searchsorted(self.z, z, side="right") - 1, 0, self.z.size - 2)
        t = (z - self.z[k]) / (self.z[k + 1] - self.z[k])
        return k, t

    def tensor(self, z, x=None) -> np.ndarray:
        k, t = self._locate(z)
        t = np.asarray(t)[..., None, None]
        return (1 - t) * self.a0[k] + t * self.a0[k + 1]

    def dtensor(self, z, x=None) -> np.ndarray:
        zz = np.asarray(z, dtype=float)
        k, _ = self._locate(zz)
        slope = (self.a0[k + 1] - self.a0[k]) / (self.z[k + 1] - self.z[k])[..., None, None]
        inside = ((zz >= self.z[0]) & (zz <= self.z[-1]))[..., None, None]
        return np.where(inside, slope, 0.0)

    @property
    def depends_on_z(self) -> bool:
        return bool(np.ptp(self.a0, axis=0).max() > 0)

    def nearest_cell(self, z: float) -> CellSolution:
        if not self.cells:
            raise ValueError("table was built without stored cell solutions")
        return self.cells[int(np.argmin(np.abs(self.z - z)))]

    def sample_correctors(self, z_nodes, y_points, mode: str = "linear", second_order: bool = False):
        """Correctors evaluated at per-point temperatures and cell points.

        ``mode='linear'`` interpolates between neighbouring temperature
        samples; ``mode='nearest'`` takes the closest sample.  Returns a list
        ``[N_j]`` and, with ``second_order``, a dict ``{(k, l): M_kl}``.
        """
        if not self.cells:
            raise ValueError("table was built without stored cell solutions")
        grid = self.cells[0].grid
        z_nodes = np.asarray(z_nodes, dtype=float)
        if mode == "nearest":
            k = np.argmin(np.abs(self.z[:, None] - z_nodes[None, :]), axis=0)
            t = np.zeros_like(z_nodes)
        elif mode == "linear":
            k, t = self._locate(z_nodes)
        else:
            raise ValueError(f"unknown corrector lookup mode {mode!r}")
        kp = np.minimum(k + 1, self.z.size - 1)
        cols = np.arange(z_nodes.size)

        def lookup(getter):
            samples = np.stack([sample_periodic(grid, getter(c), y_points) for c in self.cells])
            return (1 - t) * samples[k, cols] + t * samples[kp, cols]

        ns = [lookup(lambda c, j=j: c.correctors[j]) for j in range(grid.dim)]
        if not second_order:
            return ns, None
        if any(c.second_order is None for c in self.cells):
            raise ValueError("table cells carry no second-order correctors")
        ms = {}
        for a in range(grid.dim):
            for b in range(a, grid.dim):
                ms[(a, b)] = ms[(b, a)] = lookup(lambda c, a=a, b=b: c.second_order[(a, b)])
        return ns, ms

    def rows(self) -> list:
        d = self.dim
        return [[float(z)] + [float(v) for v in a.reshape(d * d)] for z, a in zip(self.z, self.a0)]

    def header(self) -> list:
        d = self.dim
        return ["z"] + [f"a0_{i + 1}{j + 1}" for i in range(d) for j in range(d)]


def build_table(
    model: CoefficientModel,
    bounds: TemperatureBounds,
    samples: int,
    grid: Grid,
    second_order: bool = False,
    keep_cells: bool = True,
    tol: float = 1e-13,
) -> HomogenizedTable:
    """Homogenized tensors at ``samples`` uniform temperatures on ``[T_min, T_max + C_*]``."""
    if samples < 2:
        raise ValueError("a homogenized table needs at least 2 samples")
    if not bounds.upper > bounds.T_min:
        raise ValueError("a homogenized table needs T_max + C_* > T_min")
    zs = np.linspace(bounds.T_min, bounds.upper, samples)
    cells, a0s = [], []
    for z in zs:
        cell = solve_cell_full(model, z, grid, second_order=second_order, tol=tol)
        a0s.append(cell.a0)
        cells.append(cell)
    return HomogenizedTable(zs, np.array(a0s), cells if keep_cells else None)


def exact_table_derivative(model: CoefficientModel, z: float, grid: Grid) -> np.ndarray:
    """``dA0/dz`` by the adjoint identity ``∫ (I + ∇N)ᵀ A'(z) (I + ∇N)``.

    The quadratic term is integrated exactly with the element stiffness of ``A'``.
    """
    cell = solve_cell(model, z, grid)
    y = grid.element_midpoints
    dA = eval_coefficient_derivative(model, np.full(len(y), float(z)), y)
    d = grid.dim
    grads = cell.corrector_gradients()
    g = np.stack(grads, axis=2)  # (n_e, dim, dim): g[:, k, j] = mean ∂_k N_j
    vol = grid.element_volume
    out = vol * (dA.sum(axis=0) + np.einsum("eik,ekj->ij", dA, g) + np.einsum("eki,ekj->ij", g, dA))
    local = element_stiffness(grid, dA)
    conn = grid.element_nodes
    for i in range(d):
        ni = cell.correctors[i][conn]
        for j in range(d):
            out[i, j] += np.einsum("ea,eab,eb->", ni, local, cell.correctors[j][conn])
    return 0.5 * (out + out.T)
