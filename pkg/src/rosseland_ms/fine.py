"""Direct ε-resolved solves of ``-div[A(u_ε, x/ε)∇u_ε] = f``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Grid
from .macro import PeriodicCoefficient, SolverConfig, SourceTerm, solve
from .material import CoefficientModel, TemperatureBounds


@dataclass
class EpsilonProblem:
    """Oscillating problem with period ``eps`` tiling ``extent`` by whole periods.

    The fine grid resolves each period with ``cells_per_period`` elements per
    axis unless an explicit ``grid`` is given.
    """

    eps: float
    model: CoefficientModel
    bc: object
    bounds: TemperatureBounds
    cells_per_period: int = 16
    f: Optional[SourceTerm] = None
    extent: Optional[tuple] = None
    grid: Optional[Grid] = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"ε must be positive, got {self.eps}")
        if self.cells_per_period < 1:
            raise ValueError("cells_per_period must be positive")
        if self.extent is None:
            self.extent = tuple((0.0, 1.0) for _ in range(self.model.dim))
        for a, b in self.extent:
            periods = (b - a) / self.eps
            if abs(periods - round(periods)) > 1e-9 * max(1.0, periods) or round(periods) < 1:
                raise ValueError(f"ε = {self.eps} does not tile [{a}, {b}] by whole periods")

    @property
    def periods(self) -> tuple:
        return tuple(int(round((b - a) / self.eps)) for a, b in self.extent)

    def fine_grid(self) -> Grid:
        if self.grid is not None:
            return self.grid
        return Grid(tuple(p * self.cells_per_period for p in self.periods), self.extent)

    def coefficient(self) -> PeriodicCoefficient:
        origin = np.array([a for a, _ in self.extent])
        return PeriodicCoefficient(self.model, self.eps, origin=origin)


def solve_fine(problem: EpsilonProblem, config: Optional[SolverConfig] = None):
    """Picard or Newton solve on a grid resolving every period.

    Rejects grids coarser than ``ε / cells_per_period``.
    """
    grid = problem.fine_grid()
    limit = problem.eps / problem.cells_per_period
    if np.any(grid.spacing > limit * (1 + 1e-9)):
        raise ValueError(
            f"fine grid spacing {grid.spacing.max():.4g} exceeds ε/cells_per_period = {limit:.4g}"
        )
    return solve(problem.coefficient(), grid, problem.bc, problem.bounds, problem.f, config)
