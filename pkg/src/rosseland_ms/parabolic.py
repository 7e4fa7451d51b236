"""Rothe's method for ``∂_t u - div[A(u, x)∇u] = 0`` with Dirichlet data ``g``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .grid import Grid, ScalarField, SparseSystem, assemble_diffusion, l2_norm, solve_dirichlet
from .macro import SolveReport, SolverConfig, audit_bounds, element_coefficients
from .material import TemperatureBounds

TimeData = Union[float, Callable[[np.ndarray, float], np.ndarray]]


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    step: float

    def __post_init__(self):
        if not (self.horizon > 0 and self.step > 0):
            raise ValueError("horizon and step must be positive")
        n = self.horizon / self.step
        if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 1:
            raise ValueError(f"step {self.step} does not divide horizon {self.horizon}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.step))

    def time(self, j: int) -> float:
        return j * self.step


@dataclass
class Trajectory:
    """Stored time levels of a nodal field."""

    grid: Grid
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)

    def append(self, t: float, values) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must increase")
        self.times.append(float(t))
        self.fields.append(np.array(values, dtype=float))

    @classmethod
    def constant(cls, grid: Grid, values, t0: float, t1: float, samples: int = 2) -> "Trajectory":
        tr = cls(grid)
        for t in np.linspace(t0, t1, samples):
            tr.append(t, values)
        return tr

    def prune_before(self, t: float) -> None:
        """Drop levels no longer needed for windows starting at ``t``."""
        keep = 0
        while keep + 1 < len(self.times) and self.times[keep + 1] <= t:
            keep += 1
        del self.times[:keep]
        del self.fields[:keep]

    def at(self, t: float) -> np.ndarray:
        ts = self.times
        k = int(np.searchsorted(ts, t, side="right") - 1)
        k = min(max(k, 0), len(ts) - 2)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1 - w) * self.fields[k] + w * self.fields[k + 1]


def delayed_coefficient(history: Trajectory, t: float, h0: float) -> ScalarField:
    """Time average ``(1/h0) ∫_{t-h0}^t z(s) ds`` by the trapezoid rule on stored levels.

    Window ends falling between stored levels are linearly interpolated.
    """
    if not h0 > 0:
        raise ValueError("delay window h0 must be positive")
    a, b = t - h0, t
    ts = history.times
    tol = 1e-12 * max(1.0, abs(t), h0)
    if len(ts) < 2 or ts[0] > a + tol or ts[-1] < b - tol:
        span = (ts[0], ts[-1]) if ts else None
        raise ValueError(f"history {span} does not cover the window [{a}, {b}]")
    knots = [a] + [s for s in ts if a + tol < s < b - tol] + [b]
    vals = [history.at(s) for s in knots]
    total = np.zeros_like(history.fields[0])
    for k in range(len(knots) - 1):
        total += 0.5 * (knots[k + 1] - knots[k]) * (vals[k] + vals[k + 1])
    # the float span b - a, not h0, keeps the rule exact for constants
    return ScalarField(history.grid, total / (knots[-1] - knots[0]))


def _g(data: TimeData, x: np.ndarray, t: float) -> np.ndarray:
    if callable(data):
        return np.asarray(data(x, t), dtype=float).reshape(len(x))
    return np.full(len(x), float(data))


@dataclass
class ParabolicProblem:
    """Coefficient source, data ``g(x, t)`` (initial and boundary) and bounds.

    With ``delay`` set, the coefficient uses the trailing time average of the
    solution over ``delay`` and ``history`` must cover ``[-delay, 0]``.
    """

    grid: Grid
    source: object
    g: TimeData
    bounds: TemperatureBounds
    delay: Optional[float] = None
    history: Optional[Trajectory] = None

    def __post_init__(self):
        if self.grid.boundary_nodes.size == 0:
            raise ValueError("parabolic problems need a Dirichlet boundary")
        u0 = _g(self.g, self.grid.node_coords, 0.0)
        if u0.min() < self.bounds.T_min or u0.max() > self.bounds.T_max:
            raise ValueError("initial data g(., 0) leaves [T_min, T_max]")
        if self.delay is not None:
            if not self.delay > 0:
                raise ValueError("delay must be positive")
            if self.history is None:
                raise ValueError("a delayed coefficient needs the history on [-delay, 0]")

    def initial(self) -> np.ndarray:
        return _g(self.g, self.grid.node_coords, 0.0)


def rothe_step(
    u_prev,
    t: float,
    dt: float,
    problem: ParabolicProblem,
    config: Optional[SolverConfig] = None,
    history: Optional[Trajectory] = None,
):
    """One implicit Euler step ``t -> t + dt`` with inner Picard iteration.

    Solves ``M (u - u_prev)/dt + K(z) u = 0`` with lumped mass ``M`` and ``z``
    frozen at the previous inner iterate (started from ``u_prev``), or at the
    delayed average over ``history`` extended by that iterate.
    """
    config = config or SolverConfig()
    grid = problem.grid
    prev = np.asarray(u_prev.values if isinstance(u_prev, ScalarField) else u_prev, dtype=float)
    nodes = grid.boundary_nodes
    t1 = t + dt
    gb = _g(problem.g, grid.node_coords[nodes], t1)
    if gb.min() < problem.bounds.T_min or gb.max() > problem.bounds.T_max:
        raise ValueError(f"boundary data at t={t1} leaves [T_min, T_max]")
    mass = sp.diags(grid.lumped_mass / dt)
    rhs = grid.lumped_mass / dt * prev
    if problem.delay is not None and history is None:
        raise ValueError("a delayed coefficient needs the stored history")
    report = SolveReport("rothe-picard")
    z = prev.copy()
    max_iter = config.max_iter if problem.source.depends_on_z else 1
    for i in range(1, max_iter + 1):
        if problem.delay is not None:
            window = Trajectory(grid, list(history.times) + [t1], list(history.fields) + [z])
            zc = delayed_coefficient(window, t1, problem.delay).values
        else:
            zc = z
        system = assemble_diffusion(grid, element_coefficients(problem.source, grid, zc))
        system = SparseSystem((system.matrix + mass).tocsr(), rhs)
        w, its = solve_dirichlet(system, nodes, gb, tol=config.linear_tol, x0=z)
        report.linear_iterations.append(its)
        report.iterate_min.append(float(w.min()))
        report.iterate_max.append(float(w.max()))
        inc = l2_norm(grid, w - z) / max(l2_norm(grid, w), 1e-300)
        report.increments.append(float(inc))
        z = w
        report.iterations = i
        if inc <= config.tol or max_iter == 1:
            report.converged = True
            break
    report.audit = audit_bounds(z, problem.bounds, config.audit_slack)
    report.box = (problem.bounds.T_min, problem.bounds.upper)
    if not report.converged:
        report.flags.append("not_converged")
    if not report.audit.passed:
        report.flags.append("bounds_violation")
    return ScalarField(grid, z), report


def parabolic_solve(
    problem: ParabolicProblem,
    time_grid: TimeGrid,
    config: Optional[SolverConfig] = None,
    snapshot_every: int = 1,
):
    """March ``rothe_step`` over the time grid.

    Returns the trajectory (every ``snapshot_every``-th level plus the final
    one) and the per-step reports.
    """
    config = config or SolverConfig()
    grid = problem.grid
    u = problem.initial()
    traj = Trajectory(grid)
    traj.append(0.0, u)
    buffer = None
    if problem.delay is not None:
        buffer = Trajectory(grid, list(problem.history.times), list(problem.history.fields))
        if buffer.times[-1] < -1e-12:
            raise ValueError("history must extend to t = 0")
        if buffer.times[-1] < 0:
            buffer.append(0.0, u)
    reports = []
    n = time_grid.steps
    for j in range(n):
        t = time_grid.time(j)
        if buffer is not None:
            buffer.prune_before(t + time_grid.step - problem.delay)
        field_new, rep = rothe_step(u, t, time_grid.step, problem, config, history=buffer)
        u = field_new.values
        reports.append(rep)
        t1 = time_grid.time(j + 1)
        if buffer is not None:
            buffer.append(t1, u)
        if (j + 1) % snapshot_every == 0 or j + 1 == n:
            traj.append(t1, u)
    return traj, reports
