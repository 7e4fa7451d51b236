"""Periodic homogenization of quasilinear heat conduction with Rosseland-type radiative conductivity."""

from .cell import HomogenizedTable, build_table, homogenized_tensor, solve_cell, solve_cell_full, solve_general_cell
from .corrector import ErrorReport, error_norms, fit_rates, reconstruct
from .fine import EpsilonProblem, solve_fine
from .grid import Grid, ScalarField, assemble_diffusion, solve_cg
from .macro import Dirichlet, PeriodicCoefficient, Robin, SolverConfig, SourceTerm, newton_solve, picard_solve, solve
from .material import CoefficientModel, TemperatureBounds, eval_coefficient, make_model
from .parabolic import ParabolicProblem, TimeGrid, parabolic_solve, rothe_step
from .presets import preset
from .study import run_study

__version__ = "0.1.0"
