"""Structured 1D/2D grids, Q1 assembly and a Jacobi-preconditioned CG solver.

Node values are stored as flat arrays in C order over the node shape
``(nx_nodes[, ny_nodes])``, so the last axis varies fastest.  Periodic axes
store one node per period (the duplicated right/top node is dropped).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp


class LinearSolverError(RuntimeError):
    """Raised when CG fails to reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Grid:
    """Rectilinear grid of ``cells`` elements per axis on ``extent``."""

    cells: tuple
    extent: Optional[tuple] = None
    periodic: Optional[tuple] = None

    def __post_init__(self):
        cells = tuple(int(c) for c in np.atleast_1d(self.cells))
        if len(cells) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(cells)}")
        if any(c < 1 for c in cells):
            raise ValueError(f"cells per axis must be positive, got {cells}")
        extent = self.extent
        if extent is None:
            extent = tuple((0.0, 1.0) for _ in cells)
        extent = tuple((float(a), float(b)) for a, b in extent)
        if len(extent) != len(cells) or any(b <= a for a, b in extent):
            raise ValueError(f"invalid extent {extent} for cells {cells}")
        periodic = self.periodic
        if periodic is None:
            periodic = (False,) * len(cells)
        elif isinstance(periodic, (bool, np.bool_)):
            periodic = (bool(periodic),) * len(cells)
        periodic = tuple(bool(p) for p in periodic)
        if len(periodic) != len(cells):
            raise ValueError("periodic flags must match the grid dimension")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "periodic", periodic)

    @classmethod
    def unit_cell(cls, cells_per_axis: int, dim: int) -> "Grid":
        """Periodic grid on Y = (0, 1)^dim."""
        return cls((cells_per_axis,) * dim, periodic=(True,) * dim)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / c for (a, b), c in zip(self.extent, self.cells)])

    @property
    def nodes_shape(self) -> tuple:
        return tuple(c if p else c + 1 for c, p in zip(self.cells, self.periodic))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.nodes_shape))

    @property
    def n_elements(self) -> int:
        return int(np.prod(self.cells))

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def fully_periodic(self) -> bool:
        return all(self.periodic)

    def axis_nodes(self, axis: int) -> np.ndarray:
        a, _ = self.extent[axis]
        return a + self.spacing[axis] * np.arange(self.nodes_shape[axis])

    @cached_property
    def node_coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, dim)``."""
        axes = [self.axis_nodes(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def element_nodes(self) -> np.ndarray:
        """Connectivity, shape ``(n_elements, 2**dim)``.

        Local order is (0,0), (1,0), (0,1), (1,1) in 2D; wraps on periodic axes.
        """
        shape = self.nodes_shape
        if self.dim == 1:
            e = np.arange(self.cells[0])
            return np.stack([e, (e + 1) % shape[0]], axis=1)
        ex, ey = np.meshgrid(np.arange(self.cells[0]), np.arange(self.cells[1]), indexing="ij")
        ex, ey = ex.ravel(), ey.ravel()
        ex1 = (ex + 1) % shape[0]
        ey1 = (ey + 1) % shape[1]
        idx = lambda i, j: i * shape[1] + j  # noqa: E731
        return np.stack([idx(ex, ey), idx(ex1, ey), idx(ex, ey1), idx(ex1, ey1)], axis=1)

    @cached_property
    def element_midpoints(self) -> np.ndarray:
        h = self.spacing
        axes = [self.extent[k][0] + h[k] * (np.arange(self.cells[k]) + 0.5) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Indices of nodes on non-periodic boundary faces (sorted)."""
        mask = np.zeros(self.nodes_shape, dtype=bool)
        for k, p in enumerate(self.periodic):
            if p:
                continue
            sl = [slice(None)] * self.dim
            sl[k] = 0
            mask[tuple(sl)] = True
            sl[k] = -1
            mask[tuple(sl)] = True
        return np.flatnonzero(mask.ravel())

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Row sums of the Q1 mass matrix (nodal control volumes)."""
        m = np.zeros(self.n_nodes)
        share = self.element_volume / 2 ** self.dim
        np.add.at(m, self.element_nodes.ravel(), share)
        return m

    @cached_property
    def boundary_weights(self) -> np.ndarray:
        """Lumped boundary measure per node (zero on interior nodes)."""
        w = np.zeros(self.nodes_shape)
        if self.dim == 1:
            if not self.periodic[0]:
                w[0] = w[-1] = 1.0
            return w.ravel()
        h = self.spacing
        for k in range(2):
            if self.periodic[k]:
                continue
            other = 1 - k
            line = np.full(self.nodes_shape[other], h[other])
            if not self.periodic[other]:
                line[0] = line[-1] = h[other] / 2
            for end in (0, -1):
                sl = [slice(None), slice(None)]
                sl[k] = end
                w[tuple(sl)] += line
        return w.ravel()

    def element_gradients(self, values: np.ndarray) -> np.ndarray:
        """Gradient of the Q1 interpolant at element midpoints, shape ``(n_e, dim)``."""
        u = np.asarray(values)[self.element_nodes]
        h = self.spacing
        if self.dim == 1:
            return ((u[:, 1] - u[:, 0]) / h[0])[:, None]
        gx = (u[:, 1] - u[:, 0] + u[:, 3] - u[:, 2]) / (2 * h[0])
        gy = (u[:, 2] - u[:, 0] + u[:, 3] - u[:, 1]) / (2 * h[1])
        return np.stack([gx, gy], axis=1)

    def element_means(self, values: np.ndarray) -> np.ndarray:
        """Midpoint value of the Q1 interpolant on each element."""
        return np.asarray(values)[self.element_nodes].mean(axis=1)


@dataclass
class ScalarField:
    """Nodal values on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise ValueError(
                f"field has {self.values.size} values, grid has {self.grid.n_nodes} nodes"
            )

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.nodes_shape)


@dataclass
class SparseSystem:
    """Symmetric sparse matrix (CSR) and right-hand side."""

    matrix: sp.csr_matrix
    rhs: np.ndarray


# Reference integrals of Q1 shape-function derivative products, per unit tensor entry.
def _reference_gradient_integrals(grid: Grid) -> np.ndarray:
    h = grid.spacing
    if grid.dim == 1:
        s = np.array([-1.0, 1.0])
        return (np.outer(s, s) / h[0])[None, None]
    sx = np.array([-1.0, 1.0, -1.0, 1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    mx = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    ix = np.array([0, 1, 0, 1])
    iy = np.array([0, 0, 1, 1])
    g = np.zeros((2, 2, 4, 4))
    g[0, 0] = np.outer(sx, sx) / h[0] * h[1] * mx[iy][:, iy]
    g[1, 1] = np.outer(sy, sy) / h[1] * h[0] * mx[ix][:, ix]
    g[0, 1] = np.outer(sx, sy) / 4.0
    g[1, 0] = g[0, 1].T
    return g


def shape_gradient_integrals(grid: Grid) -> np.ndarray:
    """``∫_e ∂_p φ_i`` for each local node i and axis p, shape ``(2**dim, dim)``."""
    h = grid.spacing
    if grid.dim == 1:
        return np.array([[-1.0], [1.0]])
    sx = np.array([-1.0, 1.0, -1.0, 1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    return np.stack([sx * h[1] / 2, sy * h[0] / 2], axis=1)


def element_stiffness(grid: Grid, tensors: np.ndarray) -> np.ndarray:
    """Local stiffness matrices ``∫_e A_e ∇φ_j·∇φ_i``, shape ``(n_e, nen, nen)``."""
    g = _reference_gradient_integrals(grid)
    return np.einsum("epq,pqij->eij", tensors, g)


def _check_spd(tensors: np.ndarray) -> None:
    if not np.allclose(tensors, np.swapaxes(tensors, 1, 2), rtol=1e-12, atol=0.0):
        bad = int(np.argmax(np.abs(tensors - np.swapaxes(tensors, 1, 2)).reshape(len(tensors), -1).max(1)))
        raise ValueError(f"element tensor {bad} is not symmetric")
    eig = np.linalg.eigvalsh(tensors)
    if not np.all(eig[:, 0] > 0):
        bad = int(np.argmin(eig[:, 0]))
        raise ValueError(f"element tensor {bad} is not positive definite (min eig {eig[bad, 0]:.3e})")


def as_tensor_field(grid: Grid, coeff) -> np.ndarray:
    """Broadcast scalar/array coefficients to ``(n_e, dim, dim)``."""
    c = np.asarray(coeff, dtype=float)
    n, d = grid.n_elements, grid.dim
    if c.ndim == 0:
        return np.broadcast_to(c * np.eye(d), (n, d, d)).copy()
    if c.shape == (n,):
        return c[:, None, None] * np.eye(d)
    if c.shape == (d, d):
        return np.broadcast_to(c, (n, d, d)).copy()
    if c.shape == (n, d, d):
        return c
    raise ValueError(f"cannot interpret coefficient of shape {c.shape} on {n} elements in {d}D")


def assemble_matrix(grid: Grid, local: np.ndarray) -> sp.csr_matrix:
    conn = grid.element_nodes
    nen = conn.shape[1]
    rows = np.repeat(conn, nen, axis=1).ravel()
    cols = np.tile(conn, (1, nen)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))
    return mat.tocsr()


def assemble_diffusion(grid: Grid, coeff, robin_alpha=None, robin_value=None) -> SparseSystem:
    """Assemble ``∫ A ∇w·∇φ (+ ∫_Γ α w φ)`` with one coefficient per element.

    Parameters
    ----------
    coeff : scalar, ``(n_e,)``, ``(dim, dim)`` or ``(n_e, dim, dim)``
        Coefficient at element midpoints.
    robin_alpha, robin_value : array_like, optional
        Nodal α and ambient value on boundary nodes.  The boundary integral is
        lumped, which keeps the matrix an M-matrix.
    """
    tensors = as_tensor_field(grid, coeff)
    _check_spd(tensors)
    matrix = assemble_matrix(grid, element_stiffness(grid, tensors))
    rhs = np.zeros(grid.n_nodes)
    if robin_alpha is not None:
        w = grid.boundary_weights * np.broadcast_to(np.asarray(robin_alpha, float), (grid.n_nodes,))
        matrix = (matrix + sp.diags(w)).tocsr()
        if robin_value is not None:
            rhs += w * np.broadcast_to(np.asarray(robin_value, float), (grid.n_nodes,))
    return SparseSystem(matrix, rhs)


def solve_cg(
    system: SparseSystem,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
    singular: bool = False,
):
    """Jacobi-preconditioned conjugate gradients.

    With ``singular=True`` the system is treated as a periodic operator whose
    kernel is the constants: the right-hand side and every residual are
    projected to zero mean and the returned iterate has zero mean.

    Returns ``(x, iterations)``; raises :class:`LinearSolverError` when
    ``max_iter`` is exhausted.
    """
    a = system.matrix
    b = np.asarray(system.rhs, dtype=float)
    n = b.size
    if max_iter is None:
        max_iter = 10 * n + 100
    if singular:
        b = b - b.mean()
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n), 0
    inv_diag = 1.0 / a.diagonal()
    r = b - a @ x
    if singular:
        r -= r.mean()
    res = np.linalg.norm(r) / bnorm
    if res <= tol:
        return (x - x.mean() if singular else x), 0
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        ap = a @ p
        alpha = rz / (p @ ap)
        x += alpha * p
        r -= alpha * ap
        if singular:
            r -= r.mean()
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            if singular:
                x -= x.mean()
            return x, it
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise LinearSolverError(
        f"CG did not converge in {max_iter} iterations (relative residual {res:.3e})", res, max_iter
    )


def solve_dirichlet(
    system: SparseSystem,
    nodes: np.ndarray,
    values: np.ndarray,
    tol: float = 1e-12,
    max_iter: Optional[int] = None,
    x0: Optional[np.ndarray] = None,
):
    """Eliminate Dirichlet rows/columns, solve the free block by CG.

    Returns ``(x, iterations)`` with ``x`` the full nodal vector.
    """
    n = system.rhs.size
    nodes = np.asarray(nodes, dtype=int)
    x = np.zeros(n)
    x[nodes] = values
    free = np.ones(n, dtype=bool)
    free[nodes] = False
    a = system.matrix
    a_ff = a[free][:, free]
    rhs = system.rhs[free] - a[free][:, ~free] @ x[~free]
    guess = None if x0 is None else np.asarray(x0)[free]
    xf, its = solve_cg(SparseSystem(a_ff.tocsr(), rhs), tol=tol, max_iter=max_iter, x0=guess)
    x[free] = xf
    return x, its


def gradient(field: ScalarField) -> list:
    """Nodal gradient per axis.

    Central differences in the interior, second-order one-sided differences
    at non-periodic boundaries and wrapped central differences on periodic
    axes.
    """
    grid = field.grid
    u = field.reshaped()
    out = []
    for k in range(grid.dim):
        h = grid.spacing[k]
        if grid.periodic[k]:
            g = (np.roll(u, -1, axis=k) - np.roll(u, 1, axis=k)) / (2 * h)
        elif grid.cells[k] >= 2:
            g = np.gradient(u, h, axis=k, edge_order=2)
        else:
            g = np.gradient(u, h, axis=k, edge_order=1)
        out.append(ScalarField(grid, g.ravel()))
    return out


def l2_norm(grid: Grid, values: np.ndarray) -> float:
    """Discrete L² norm with lumped (nodal) weights."""
    v = np.asarray(values)
    return float(np.sqrt(np.sum(grid.lumped_mass * v * v)))


def sample_periodic(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a fully periodic nodal field at ``points``."""
    if not grid.fully_periodic:
        raise ValueError("sample_periodic needs a fully periodic grid")
    u = np.asarray(values).reshape(grid.nodes_shape)
    pts = np.atleast_2d(points)
    lo = np.array([a for a, _ in grid.extent])
    t = (pts - lo) / grid.spacing
    i0 = np.floor(t).astype(int)
    frac = t - i0
    shape = grid.nodes_shape
    if grid.dim == 1:
        a0 = i0[:, 0] % shape[0]
        a1 = (a0 + 1) % shape[0]
        f = frac[:, 0]
        return (1 - f) * u[a0] + f * u[a1]
    ax0, ay0 = i0[:, 0] % shape[0], i0[:, 1] % shape[1]
    ax1, ay1 = (ax0 + 1) % shape[0], (ay0 + 1) % shape[1]
    fx, fy = frac[:, 0], frac[:, 1]
    return (
        (1 - fx) * (1 - fy) * u[ax0, ay0]
        + fx * (1 - fy) * u[ax1, ay0]
        + (1 - fx) * fy * u[ax0, ay1]
        + fx * fy * u[ax1, ay1]
    )


def interpolate(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a nodal field at ``points``.

    Periodic axes wrap; non-periodic axes clamp to the extent.
    """
    if grid.fully_periodic:
        return sample_periodic(grid, values, points)
    u = np.asarray(values).reshape(grid.nodes_shape)
    pts = np.atleast_2d(points)
    idx, frac = [], []
    for k in range(grid.dim):
        a, b = grid.extent[k]
        n = grid.nodes_shape[k]
        t = (pts[:, k] - a) / grid.spacing[k]
        if grid.periodic[k]:
            i0 = np.floor(t).astype(int)
            f = t - i0
            i0 %= n
            i1 = (i0 + 1) % n
        else:
            t = np.clip(t, 0.0, grid.cells[k])
            i0 = np.minimum(np.floor(t).astype(int), grid.cells[k] - 1)
            f = t - i0
            i1 = i0 + 1
        idx.append((i0, i1))
        frac.append(f)
    if grid.dim == 1:
        (i0, i1), f = idx[0], frac[0]
        return (1 - f) * u[i0] + f * u[i1]
    (x0, x1), (y0, y1) = idx
    fx, fy = frac
    return (
        (1 - fx) * (1 - fy) * u[x0, y0]
        + fx * (1 - fy) * u[x1, y0]
        + (1 - fx) * fy * u[x0, y1]
        + fx * fy * u[x1, y1]
    )
