"""Homogenization convergence study over a sequence of periods ε."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .cell import HomogenizedTable, build_table
from .corrector import ErrorReport, ErrorRow, error_norms, reconstruct
from .fine import EpsilonProblem, solve_fine
from .grid import Grid, ScalarField
from .macro import SolverConfig, SolveReport, SourceTerm, energy, solve
from .material import CoefficientModel, TemperatureBounds


@dataclass
class EpsilonRun:
    eps: float
    u_eps: ScalarField
    report: SolveReport
    by_order: dict
    row: ErrorRow


@dataclass
class StudyResult:
    table: HomogenizedTable
    u0: ScalarField
    macro_report: SolveReport
    runs: list
    errors: ErrorReport
    order_rates: dict = field(default_factory=dict)

    @property
    def reports(self) -> list:
        return [self.macro_report] + [r.report for r in self.runs]


def _run_eps(eps, model, bc, bounds, f, cpp, config, table, u0, energy_hom, order, lookup, interior):
    problem = EpsilonProblem(eps, model, bc, bounds, cpp, f)
    u_eps, report = solve_fine(problem, config)
    grid = u_eps.grid
    e_ref = energy(problem.coefficient(), grid, u_eps)
    exp = reconstruct(u0, table, eps, order, grid, lookup=lookup)
    by_order = {}
    for k in range(order + 1):
        by_order[k] = error_norms(u_eps, exp.truncated(k), interior, eps, e_ref, energy_hom)
    first = by_order[min(1, order)]
    row = ErrorRow(
        eps,
        by_order[0].sup_err,
        by_order[0].l2_err,
        first.h1_interior_err,
        by_order[0].energy_diff,
        first.grad_interior_err,
    )
    return EpsilonRun(eps, u_eps, report, by_order, row)


def run_study(
    model: CoefficientModel,
    bounds: TemperatureBounds,
    bc,
    eps_list,
    f: Optional[SourceTerm] = None,
    cells_per_period: int = 16,
    macro_cells: Optional[int] = None,
    table_samples: int = 65,
    config: Optional[SolverConfig] = None,
    order: int = 1,
    lookup: str = "linear",
    interior: float = 0.5,
    jobs: int = 1,
) -> StudyResult:
    """Compare ε-resolved solutions with the homogenized solution and its correctors.

    Per ε the row holds ``sup|u_ε - u0|``, ``|u_ε - u0|_L2``, the interior H¹
    error of the first-order expansion and ``|E_ε - E_0|``.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 1:
        raise ValueError("study needs at least one ε")
    config = config or SolverConfig()
    dim = model.dim
    cell_grid = Grid.unit_cell(cells_per_period, dim)
    table = build_table(model, bounds, table_samples, cell_grid, second_order=order >= 2)
    if macro_cells is None:
        macro_cells = int(round(cells_per_period / min(eps_list)))
    macro = Grid((macro_cells,) * dim)
    u0, macro_report = solve(table, macro, bc, bounds, f, config)
    energy_hom = energy(table, macro, u0)

    args = (model, bc, bounds, f, cells_per_period, config, table, u0, energy_hom, order, lookup, interior)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(lambda e: _run_eps(e, *args), eps_list))
    else:
        runs = [_run_eps(e, *args) for e in eps_list]

    errors = ErrorReport.from_rows([r.row for r in runs], interior) if len(set(eps_list)) >= 3 else ErrorReport(
        [r.row for r in runs], {}, interior
    )
    order_rates = {}
    if len(set(eps_list)) >= 3:
        for k in range(order + 1):
            order_rates[k] = ErrorReport.from_rows([r.by_order[k] for r in runs], interior).rates
    return StudyResult(table, u0, macro_report, runs, errors, order_rates)


def macro_nodes_on(fine: Grid, macro: Grid) -> np.ndarray:
    """Fine-node indices shared with the macro grid (for plotting)."""
    ratio = np.array(fine.cells) // np.array(macro.cells)
    sl = tuple(slice(None, None, int(r)) for r in ratio)
    return np.arange(fine.n_nodes).reshape(fine.nodes_shape)[sl].ravel()
