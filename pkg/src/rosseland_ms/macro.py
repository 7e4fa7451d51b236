"""Nonlinear elliptic solves ``-div[A(u, x)∇u] = f`` by Picard or Newton iteration."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    Grid,
    ScalarField,
    SparseSystem,
    assemble_diffusion,
    assemble_matrix,
    element_stiffness,
    l2_norm,
    solve_dirichlet,
)
from .material import CoefficientModel, TemperatureBounds, eval_coefficient, eval_coefficient_derivative

Data = Union[float, Callable[[np.ndarray], np.ndarray]]


def _nodal(data: Data, coords: np.ndarray) -> np.ndarray:
    if callable(data):
        return np.asarray(data(coords), dtype=float).reshape(len(coords))
    return np.full(len(coords), float(data))


class PeriodicCoefficient:
    """Coefficient ``A(z, (x - origin)/ε mod Y)`` built from a cell model.

    With ``eps=1`` on the unit domain this is the plain problem with a
    cell-periodic coefficient.
    """

    def __init__(self, model: CoefficientModel, eps: float = 1.0, origin=None):
        if not eps > 0:
            raise ValueError(f"period ε must be positive, got {eps}")
        self.model = model
        self.eps = float(eps)
        self.origin = np.zeros(model.dim) if origin is None else np.asarray(origin, dtype=float)
        self.dim = model.dim

    def _y(self, x):
        return (np.atleast_2d(x) - self.origin) / self.eps

    def tensor(self, z, x):
        return eval_coefficient(self.model, np.broadcast_to(z, (len(np.atleast_2d(x)),)), self._y(x))

    def dtensor(self, z, x):
        return eval_coefficient_derivative(
            self.model, np.broadcast_to(z, (len(np.atleast_2d(x)),)), self._y(x)
        )

    @property
    def depends_on_z(self) -> bool:
        return self.model.radiative


@dataclass
class Dirichlet:
    """``u = value`` on the boundary; ``value`` is a constant or ``f(coords)``."""

    value: Data

    kind = "dirichlet"

    def describe(self) -> dict:
        return {"kind": self.kind, "value": self.value if not callable(self.value) else "callable"}


@dataclass
class Robin:
    """Flux condition ``-A∇u·n = α (u - u_gas)`` (α ≥ 0, outward normal)."""

    alpha: Data
    u_gas: Data

    kind = "robin"

    def describe(self) -> dict:
        d = {"kind": self.kind}
        for k in ("alpha", "u_gas"):
            v = getattr(self, k)
            d[k] = v if not callable(v) else "callable"
        return d


@dataclass
class SourceTerm:
    """Heat source ``f(z, x)`` with ``0 <= f <= bound``.

    ``fn`` maps nodal temperatures and coordinates to nodal values.  Without
    an explicit ``derivative`` Newton uses a central difference in ``z``.
    """

    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bound: float
    derivative: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    depends_on_z: bool = True

    @classmethod
    def constant(cls, value: float) -> "SourceTerm":
        value = float(value)
        if not 0 <= value:
            raise ValueError(f"source must be nonnegative, got {value}")
        return cls(
            lambda z, x: np.full(len(x), value),
            bound=value,
            derivative=lambda z, x: np.zeros(len(x)),
            depends_on_z=False,
        )

    def evaluate(self, z, x) -> np.ndarray:
        v = np.asarray(self.fn(z, x), dtype=float).reshape(len(x))
        if v.min() < 0 or v.max() > self.bound * (1 + 1e-12):
            raise ValueError(f"source values [{v.min():.3e}, {v.max():.3e}] leave [0, {self.bound}]")
        return v

    def dvalue(self, z, x) -> np.ndarray:
        if self.derivative is not None:
            return np.asarray(self.derivative(z, x), dtype=float).reshape(len(x))
        step = 1e-6 * np.maximum(np.abs(z), 1.0)
        return (np.asarray(self.fn(z + step, x)) - np.asarray(self.fn(z - step, x))) / (2 * step)


@dataclass
class SolverConfig:
    scheme: str = "picard"
    tol: float = 1e-10
    max_iter: int = 200
    linear_tol: float = 1e-13
    relaxation: float = 1.0
    audit_slack: float = 1e-10
    linear_max_iter: Optional[int] = None

    def __post_init__(self):
        if self.scheme not in ("picard", "newton"):
            raise ValueError(f"scheme must be 'picard' or 'newton', got {self.scheme!r}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.linear_tol > 0:
            raise ValueError("linear_tol must be positive")
        if not 0 < self.relaxation <= 1:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.audit_slack < 0:
            raise ValueError("audit_slack must be nonnegative")


@dataclass
class AuditRecord:
    min: float
    max: float
    lower: float
    upper: float
    violation: float
    excess_over_T_max: float
    passed: bool


def audit_bounds(u, bounds: TemperatureBounds, slack: float = 0.0) -> AuditRecord:
    """Compare ``u`` with ``[T_min - slack, T_max + C_* + slack]``; reports, never clips."""
    vals = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    lo, hi = float(vals.min()), float(vals.max())
    lower = bounds.T_min - slack
    upper = bounds.upper + slack
    violation = max(lower - lo, hi - upper, 0.0)
    return AuditRecord(lo, hi, lower, upper, violation, hi - bounds.T_max, violation == 0.0)


@dataclass
class SolveReport:
    scheme: str
    iterations: int = 0
    converged: bool = False
    increments: list = field(default_factory=list)
    residual: float = float("nan")
    audit: Optional[AuditRecord] = None
    iterate_min: list = field(default_factory=list)
    iterate_max: list = field(default_factory=list)
    box: tuple = ()
    flags: list = field(default_factory=list)
    fallbacks: int = 0
    damped_steps: int = 0
    linear_iterations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags

    def to_dict(self) -> dict:
        d = asdict(self)
        d["box"] = list(self.box)
        return d


# -- discrete operators --------------------------------------------------------


def element_coefficients(source, grid: Grid, u: np.ndarray) -> np.ndarray:
    """Coefficient at element midpoints with ``z`` the midpoint value of ``u``."""
    return source.tensor(grid.element_means(u), grid.element_midpoints)


def _robin_data(grid: Grid, bc):
    if isinstance(bc, Robin):
        coords = grid.node_coords
        return _nodal(bc.alpha, coords), _nodal(bc.u_gas, coords)
    return None, None


def _linear_system(source, grid, bc, u, f, coeff=None) -> SparseSystem:
    A = element_coefficients(source, grid, u) if coeff is None else coeff
    alpha, gas = _robin_data(grid, bc)
    system = assemble_diffusion(grid, A, alpha, gas)
    if f is not None:
        system.rhs = system.rhs + grid.lumped_mass * f.evaluate(u, grid.node_coords)
    return system


def _dirichlet_nodes(grid: Grid, bc):
    if isinstance(bc, Dirichlet):
        nodes = grid.boundary_nodes
        return nodes, _nodal(bc.value, grid.node_coords[nodes])
    return np.array([], dtype=int), np.array([])


def _solve_linear(system: SparseSystem, nodes, values, config: SolverConfig, x0=None):
    return solve_dirichlet(system, nodes, values, tol=config.linear_tol, max_iter=config.linear_max_iter, x0=x0)


def weak_residual(source, grid: Grid, bc, u: np.ndarray, f: Optional[SourceTerm] = None) -> float:
    """Relative nonlinear residual on free nodes, ``|K(u)u - b(u)| / |b_eff(u)|``."""
    system = _linear_system(source, grid, bc, u, f)
    nodes, values = _dirichlet_nodes(grid, bc)
    free = np.ones(grid.n_nodes, dtype=bool)
    free[nodes] = False
    r = (system.matrix @ u - system.rhs)[free]
    fixed = np.zeros(grid.n_nodes)
    fixed[nodes] = values
    b_eff = system.rhs[free] - (system.matrix @ fixed)[free]
    scale = np.linalg.norm(b_eff)
    if scale == 0:
        scale = max(np.linalg.norm((system.matrix @ u)[free]), 1.0)
    return float(np.linalg.norm(r) / scale)


def energy(source, grid: Grid, u) -> float:
    """``∫ A(u, x) ∇u·∇u`` with midpoint quadrature."""
    vals = u.values if isinstance(u, ScalarField) else np.asarray(u)
    A = element_coefficients(source, grid, vals)
    g = grid.element_gradients(vals)
    return float(grid.element_volume * np.einsum("ei,eij,ej->", g, A, g))


# -- validation ----------------------------------------------------------------


def validate_problem(grid: Grid, bc, bounds: TemperatureBounds, source) -> None:
    if source.dim != grid.dim:
        raise ValueError(f"coefficient is {source.dim}D but the grid is {grid.dim}D")
    coords = grid.node_coords
    tiny = 1e-12 * bounds.T_max
    if isinstance(bc, Dirichlet):
        if grid.boundary_nodes.size == 0:
            raise ValueError("Dirichlet data needs a non-periodic boundary")
        ub = _nodal(bc.value, coords[grid.boundary_nodes])
        if ub.min() < bounds.T_min - tiny or ub.max() > bounds.T_max + tiny:
            raise ValueError(
                f"Dirichlet data [{ub.min()}, {ub.max()}] outside [T_min, T_max] = [{bounds.T_min}, {bounds.T_max}]"
            )
    elif isinstance(bc, Robin):
        bn = grid.boundary_nodes
        alpha = _nodal(bc.alpha, coords)[bn]
        gas = _nodal(bc.u_gas, coords)[bn]
        if alpha.min() < 0:
            raise ValueError("Robin coefficient α must be nonnegative")
        if not np.any(alpha > 0):
            raise ValueError("Robin coefficient α vanishes everywhere: the problem is singular")
        if gas.min() < bounds.T_min - tiny or gas.max() > bounds.T_max + tiny:
            raise ValueError(f"u_gas [{gas.min()}, {gas.max()}] outside [T_min, T_max]")
    else:
        raise TypeError(f"unsupported boundary condition {bc!r}")


def harmonic_guess(source, grid, bc, bounds, f, config) -> np.ndarray:
    """Solve once with the coefficient frozen at ``z ≡ T_min``."""
    z = np.full(grid.n_nodes, bounds.T_min)
    system = _linear_system(source, grid, bc, z, f)
    nodes, values = _dirichlet_nodes(grid, bc)
    u, _ = _solve_linear(system, nodes, values, config)
    return u


def _prepare(source, grid, bc, bounds, f, config, z0):
    config = config or SolverConfig()
    validate_problem(grid, bc, bounds, source)
    if z0 is None:
        u = harmonic_guess(source, grid, bc, bounds, f, config)
    else:
        u = np.array(z0.values if isinstance(z0, ScalarField) else z0, dtype=float)
        if u.size != grid.n_nodes:
            raise ValueError("initial guess does not match the grid")
        a = audit_bounds(u, bounds, config.audit_slack)
        if not a.passed:
            raise ValueError(f"initial guess leaves the admissible box (violation {a.violation:.3e})")
    nodes, values = _dirichlet_nodes(grid, bc)
    u[nodes] = values
    return config, u, nodes, values


def _finish(report, source, grid, bc, bounds, f, config, u) -> tuple:
    report.residual = weak_residual(source, grid, bc, u, f)
    report.audit = audit_bounds(u, bounds, config.audit_slack)
    report.box = (bounds.T_min, bounds.upper)
    if not report.converged:
        report.flags.append("not_converged")
    if not report.audit.passed:
        report.flags.append("bounds_violation")
    slack = config.audit_slack
    if any(lo < bounds.T_min - slack or hi > bounds.upper + slack
           for lo, hi in zip(report.iterate_min, report.iterate_max)):
        report.flags.append("iterate_left_box")
    if report.audit.excess_over_T_max > bounds.source_slack + slack:
        warnings.warn(
            f"measured source excess {report.audit.excess_over_T_max:.3e} exceeds C_* = {bounds.source_slack}",
            RuntimeWarning,
            stacklevel=3,
        )
        report.flags.append("source_excess_exceeds_C_star")
    report.flags = sorted(set(report.flags))
    return ScalarField(grid, u), report


def picard_solve(
    source,
    grid: Grid,
    bc,
    bounds: TemperatureBounds,
    f: Optional[SourceTerm] = None,
    config: Optional[SolverConfig] = None,
    z0=None,
):
    """Linearized fixed-point iteration ``w = L(z)``: freeze ``A(z)`` and ``f(z)``, solve for ``w``.

    Stops when ``|u_{i+1} - u_i|_L2 <= tol |u_{i+1}|_L2``.  Every iterate's
    range is recorded so the report can certify confinement to the box.
    """
    config, u, nodes, values = _prepare(source, grid, bc, bounds, f, config, z0)
    report = SolveReport("picard")
    for i in range(1, config.max_iter + 1):
        system = _linear_system(source, grid, bc, u, f)
        w, its = _solve_linear(system, nodes, values, config, x0=u)
        report.linear_iterations.append(its)
        report.iterate_min.append(float(w.min()))
        report.iterate_max.append(float(w.max()))
        u_new = u + config.relaxation * (w - u)
        inc = l2_norm(grid, u_new - u) / max(l2_norm(grid, u_new), 1e-300)
        report.increments.append(float(inc))
        u = u_new
        report.iterations = i
        if inc <= config.tol:
            report.converged = True
            break
    return _finish(report, source, grid, bc, bounds, f, config, u)


def _newton_parts(source, grid, bc, u, f):
    A = element_coefficients(source, grid, u)
    system = _linear_system(source, grid, bc, u, f, coeff=A)
    residual = system.matrix @ u - system.rhs
    dA = source.dtensor(grid.element_means(u), grid.element_midpoints)
    conn = grid.element_nodes
    nen = conn.shape[1]
    g = np.einsum("eij,ej->ei", element_stiffness(grid, dA), u[conn])  # (n_e, nen)
    extra = np.repeat(g[:, :, None] / nen, nen, axis=2)
    jac = system.matrix + assemble_matrix(grid, extra)
    if f is not None and f.depends_on_z:
        jac = jac - sp.diags(grid.lumped_mass * f.dvalue(u, grid.node_coords))
    return system, residual, jac.tocsr()


def newton_solve(
    source,
    grid: Grid,
    bc,
    bounds: TemperatureBounds,
    f: Optional[SourceTerm] = None,
    config: Optional[SolverConfig] = None,
    z0=None,
):
    """Newton iteration on the discrete residual ``K(u)u - b(u)``.

    The Jacobian adds ``∫ (A'(u)δ)∇u·∇φ`` to the frozen-coefficient matrix and is
    nonsymmetric, so each step uses a sparse LU factorization.  A failed
    factorization falls back to a Picard step; a step that increases the
    residual is halved (both are counted in the report).
    """
    config, u, nodes, values = _prepare(source, grid, bc, bounds, f, config, z0)
    report = SolveReport("newton")
    free = np.ones(grid.n_nodes, dtype=bool)
    free[nodes] = False
    for i in range(1, config.max_iter + 1):
        system, res, jac = _newton_parts(source, grid, bc, u, f)
        rnorm = np.linalg.norm(res[free])
        delta = np.zeros(grid.n_nodes)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", spla.MatrixRankWarning)
                delta[free] = spla.splu(jac[free][:, free].tocsc()).solve(-res[free])
            if not np.all(np.isfinite(delta)):
                raise RuntimeError("non-finite Newton step")
        except (RuntimeError, spla.MatrixRankWarning):
            w, its = _solve_linear(system, nodes, values, config, x0=u)
            report.linear_iterations.append(its)
            delta = w - u
            report.fallbacks += 1
        step = config.relaxation
        floor = 1e-12 * max(np.linalg.norm(system.rhs), 1.0)
        for _ in range(12):
            if rnorm <= floor:
                break
            _, res_t, _ = _newton_parts(source, grid, bc, u + step * delta, f)
            if np.linalg.norm(res_t[free]) <= max(rnorm, floor):
                break
            step *= 0.5
            report.damped_steps += 1
        u_new = u + step * delta
        report.iterate_min.append(float(u_new.min()))
        report.iterate_max.append(float(u_new.max()))
        inc = l2_norm(grid, u_new - u) / max(l2_norm(grid, u_new), 1e-300)
        report.increments.append(float(inc))
        u = u_new
        report.iterations = i
        if inc <= config.tol:
            report.converged = True
            break
    return _finish(report, source, grid, bc, bounds, f, config, u)


def solve(source, grid, bc, bounds, f=None, config=None, z0=None):
    """Dispatch on ``config.scheme``."""
    config = config or SolverConfig()
    fn = newton_solve if config.scheme == "newton" else picard_solve
    return fn(source, grid, bc, bounds, f, config, z0)
