import warnings

import numpy as np
import pytest

from oracles import kirchhoff_solution
from rosseland_ms.grid import Grid, ScalarField
from rosseland_ms.macro import (
    Dirichlet,
    PeriodicCoefficient,
    Robin,
    SolverConfig,
    SourceTerm,
    audit_bounds,
    newton_solve,
    picard_solve,
    solve,
    weak_residual,
)
from rosseland_ms.material import TemperatureBounds, checkerboard_field, constant_field, layered_field, make_model

BOUNDS = TemperatureBounds(1.0, 2.0)
KIRCHHOFF = PeriodicCoefficient(make_model(1, constant_field(1.0, 1), constant_field(0.25, 1)))
LAYERED = PeriodicCoefficient(make_model(1, layered_field([1.0, 4.0], 1), constant_field(0.25, 1)))
RAMP = Dirichlet(lambda x: 1.0 + x[:, 0])
TIGHT = SolverConfig(tol=1e-10)


@pytest.mark.parametrize("scheme", [picard_solve, newton_solve])
def test_constant_data_is_a_fixed_point(scheme):
    u, rep = scheme(KIRCHHOFF, Grid((16,)), Dirichlet(1.5), BOUNDS)
    np.testing.assert_allclose(u.values, 1.5, atol=1e-14)
    assert rep.iterations == 1 and rep.converged and rep.ok


def test_kirchhoff_oracle_at_128():
    grid = Grid((128,))
    u, rep = picard_solve(KIRCHHOFF, grid, RAMP, BOUNDS, config=TIGHT)
    exact = kirchhoff_solution(grid.node_coords[:, 0])
    assert np.abs(u.values - exact).max() <= 1e-3
    assert u.values[64] == pytest.approx(1.672, abs=1e-3)
    assert min(rep.iterate_min) >= 1.0 - 1e-10 and max(rep.iterate_max) <= 2.0 + 1e-10


def test_kirchhoff_mesh_rate():
    errs, hs = [], []
    for n in (16, 32, 64, 128):
        grid = Grid((n,))
        u, _ = picard_solve(KIRCHHOFF, grid, RAMP, BOUNDS, config=TIGHT)
        errs.append(np.abs(u.values - kirchhoff_solution(grid.node_coords[:, 0])).max())
        hs.append(1 / n)
    rate = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert rate >= 1.8


@pytest.mark.parametrize("source", [KIRCHHOFF, LAYERED], ids=["kirchhoff", "layered"])
def test_newton_agrees_with_picard(source):
    grid = Grid((64,))
    up, rp = picard_solve(source, grid, RAMP, BOUNDS, config=TIGHT)
    un, rn = newton_solve(source, grid, RAMP, BOUNDS, config=TIGHT)
    diff = np.sqrt(np.sum(grid.lumped_mass * (up.values - un.values) ** 2))
    assert diff <= 1e-8
    assert rn.iterations <= rp.iterations / 2


def test_newton_superlinear_increments():
    _, rep = newton_solve(KIRCHHOFF, Grid((64,)), RAMP, BOUNDS, config=TIGHT)
    r = [v for v in rep.increments if v > 1e-13][-3:]
    assert len(r) == 3
    assert r[1] <= r[0] ** 1.5 and r[2] <= r[1] ** 1.5


def test_maximum_principle_2d_scalar():
    model = make_model(2, checkerboard_field(1.0, 4.0), checkerboard_field(0.25, 0.1))
    grid = Grid((16, 16))
    bc = Dirichlet(lambda x: 1.0 + x[:, 0] * x[:, 1])
    u, rep = picard_solve(PeriodicCoefficient(model, eps=0.25), grid, bc, BOUNDS, config=TIGHT)
    assert u.min() >= 1.0 - 1e-10 and u.max() <= 2.0 + 1e-10
    assert rep.ok


def test_robin_confinement():
    grid = Grid((40,))
    bc = Robin(alpha=lambda x: np.where(x[:, 0] < 0.5, 10.0, 0.5), u_gas=lambda x: np.where(x[:, 0] < 0.5, 1.0, 2.0))
    u, rep = picard_solve(LAYERED, grid, bc, BOUNDS, config=TIGHT)
    assert 1.0 <= u.min() and u.max() <= 2.0
    assert rep.converged


def test_robin_with_one_sided_alpha():
    grid = Grid((20,))
    bc = Robin(alpha=lambda x: np.where(x[:, 0] < 0.5, 3.0, 0.0), u_gas=1.7)
    u, _ = picard_solve(LAYERED, grid, bc, BOUNDS, config=TIGHT)
    np.testing.assert_allclose(u.values, 1.7, atol=1e-9)


def test_source_excess_and_audit():
    grid = Grid((64,))
    f = SourceTerm.constant(4.0)
    with pytest.warns(RuntimeWarning):
        u, rep = picard_solve(KIRCHHOFF, grid, Dirichlet(2.0), BOUNDS, f=f, config=TIGHT)
    excess = rep.audit.excess_over_T_max
    assert excess > 0 and "source_excess_exceeds_C_star" in rep.flags
    relaxed = TemperatureBounds(1.0, 2.0, excess)
    assert audit_bounds(u, relaxed, 1e-10).passed
    # early iterates overshoot the final field, so the box must cover them too
    relaxed = TemperatureBounds(1.0, 2.0, max(rep.iterate_max) - 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, rep2 = picard_solve(KIRCHHOFF, grid, Dirichlet(2.0), relaxed, f=f, config=TIGHT)
    assert rep2.ok


def test_source_monotonicity():
    grid = Grid((32,))
    tops = []
    for fv in (0.0, 1.0, 3.0):
        f = SourceTerm.constant(fv) if fv else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            u, _ = picard_solve(LAYERED, grid, RAMP, BOUNDS, f=f, config=TIGHT)
        tops.append(u.max())
    assert tops[0] <= tops[1] <= tops[2]


def test_audit_examples():
    a = audit_bounds(np.full(5, 1.0), BOUNDS, 0.0)
    assert a.passed and a.violation == 0.0 and a.min == 1.0
    b = TemperatureBounds(1.0, 2.0, 0.3)
    slack = 1e-6
    u = np.full(5, 1.5)
    u[2] = 2.0 + 2 * slack + 0.3
    r = audit_bounds(u, b, slack)
    assert not r.passed
    assert r.violation == pytest.approx(slack)


def test_weak_residual_after_solve():
    grid = Grid((32,))
    u, rep = newton_solve(LAYERED, grid, RAMP, BOUNDS, f=SourceTerm.constant(0.5), config=TIGHT)
    assert weak_residual(LAYERED, grid, RAMP, u.values, SourceTerm.constant(0.5)) == pytest.approx(rep.residual)
    assert rep.residual < 1e-8


def test_relaxation_converges_to_same_field():
    grid = Grid((32,))
    u1, r1 = picard_solve(LAYERED, grid, RAMP, BOUNDS, config=TIGHT)
    u2, r2 = picard_solve(LAYERED, grid, RAMP, BOUNDS, config=SolverConfig(tol=1e-10, relaxation=0.6))
    assert np.abs(u1.values - u2.values).max() <= 1e-8
    assert r2.iterations > r1.iterations


def test_non_convergence_is_flagged():
    _, rep = picard_solve(KIRCHHOFF, Grid((32,)), RAMP, BOUNDS, config=SolverConfig(max_iter=2))
    assert not rep.converged and "not_converged" in rep.flags


def test_dispatch_and_validation():
    grid = Grid((8,))
    u, rep = solve(KIRCHHOFF, grid, RAMP, BOUNDS, config=SolverConfig(scheme="newton"))
    assert rep.scheme == "newton"
    with pytest.raises(ValueError):
        solve(KIRCHHOFF, grid, Dirichlet(2.5), BOUNDS)
    with pytest.raises(ValueError):
        solve(KIRCHHOFF, grid, Robin(-1.0, 1.5), BOUNDS)
    with pytest.raises(ValueError):
        solve(KIRCHHOFF, grid, Robin(1.0, 3.0), BOUNDS)
    with pytest.raises(ValueError):
        SolverConfig(scheme="secant")
    with pytest.raises(ValueError):
        SolverConfig(relaxation=1.5)


def test_initial_guess_outside_box_rejected():
    grid = Grid((8,))
    with pytest.raises(ValueError):
        picard_solve(KIRCHHOFF, grid, RAMP, BOUNDS, z0=ScalarField(grid, np.full(9, 3.0)))


def test_report_serializes():
    _, rep = picard_solve(KIRCHHOFF, Grid((8,)), RAMP, BOUNDS)
    d = rep.to_dict()
    assert d["audit"]["passed"] and d["box"] == [1.0, 2.0]
