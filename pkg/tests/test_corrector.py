import numpy as np
import pytest

from rosseland_ms.cell import build_table, solve_cell_full
from rosseland_ms.corrector import CSV_COLUMNS, ErrorReport, ErrorRow, error_norms, fit_rates, interior_elements, reconstruct
from rosseland_ms.grid import Grid, ScalarField, interpolate
from rosseland_ms.macro import Dirichlet, SolverConfig, solve
from rosseland_ms.material import TemperatureBounds, constant_field, layered_field, make_model, sinusoidal_field
from rosseland_ms.study import run_study

BOUNDS = TemperatureBounds(1.0, 2.0)
RAMP = Dirichlet(lambda x: 1.0 + x[:, 0])
TIGHT = SolverConfig(tol=1e-10)


def macro_u0(model, cells=32, samples=9):
    table = build_table(model, BOUNDS, samples, Grid.unit_cell(16, model.dim))
    u0, _ = solve(table, Grid((cells,) * model.dim), RAMP, BOUNDS, config=TIGHT)
    return table, u0


def test_order_zero_is_interpolated_u0():
    table, u0 = macro_u0(make_model(1, layered_field([1.0, 4.0], 1), constant_field(0.25, 1)))
    fine = Grid((128,))
    exp = reconstruct(u0, table, 1 / 8, 0, fine)
    np.testing.assert_array_equal(exp.values, interpolate(u0.grid, u0.values, fine.node_coords))


def test_constant_model_expansion_is_u0():
    model = make_model(2, constant_field(1.0, 2), constant_field(0.25, 2))
    table = build_table(model, BOUNDS, 5, Grid.unit_cell(8, 2), second_order=True)
    u0, _ = solve(table, Grid((8, 8)), Dirichlet(lambda x: 1.0 + x[:, 0] * x[:, 1]), BOUNDS, config=TIGHT)
    fine = Grid((32, 32))
    base = reconstruct(u0, table, 0.25, 0, fine).values
    for order in (1, 2):
        np.testing.assert_allclose(reconstruct(u0, table, 0.25, order, fine).values, base, atol=1e-12)


def test_layered_first_order_slopes():
    model = make_model(1, layered_field([1.0, 4.0], 1))
    table, u0 = macro_u0(model, cells=16, samples=2)
    np.testing.assert_allclose(u0.values, 1 + u0.grid.node_coords[:, 0], atol=1e-12)
    eps = 1 / 4
    fine = Grid((64,))
    exp = reconstruct(u0, table, eps, 1, fine)
    slopes = fine.element_gradients(exp.values)[:, 0]
    mid = np.mod(fine.element_midpoints[:, 0] / eps, 1.0)
    expected = np.where(mid < 0.5, 1.6 / 1.0, 1.6 / 4.0)
    np.testing.assert_allclose(slopes, expected, atol=1e-8)


def test_single_cell_solution_route():
    model = make_model(1, layered_field([1.0, 4.0], 1))
    table, u0 = macro_u0(model, cells=16, samples=2)
    cell = solve_cell_full(model, 1.5, Grid.unit_cell(16, 1))
    fine = Grid((64,))
    a = reconstruct(u0, cell, 0.25, 1, fine).values
    b = reconstruct(u0, table, 0.25, 1, fine).values
    np.testing.assert_allclose(a, b, atol=1e-12)
    with pytest.raises(ValueError, match="order 2"):
        reconstruct(u0, cell, 0.25, 2, fine)


def test_error_norm_examples():
    grid = Grid((200,))
    x = grid.node_coords[:, 0]
    ref = ScalarField(grid, x)
    zero = error_norms(ref, x.copy())
    assert zero.sup_err == 0 and zero.l2_err == 0 and zero.h1_interior_err == 0
    row = error_norms(ref, np.zeros_like(x))
    assert row.sup_err == pytest.approx(1.0)
    assert row.l2_err == pytest.approx(1 / np.sqrt(3), abs=1e-4)
    # |∇x|=1 on the centred half-box
    assert row.h1_interior_err == pytest.approx(np.sqrt(0.5))
    assert row.grad_interior_err == pytest.approx(1.0)


def test_interior_box():
    grid = Grid((8, 8))
    mask = interior_elements(grid, 0.5)
    assert mask.sum() == 16
    with pytest.raises(ValueError):
        interior_elements(grid, 0.0)


def rows_with(power, eps=(1 / 8, 1 / 16, 1 / 32, 1 / 64)):
    return [ErrorRow(e, 3 * e ** power, 2 * e ** power, e ** power, 0.5 * e ** power) for e in eps]


@pytest.mark.parametrize("power", [1.0, 2.0])
def test_rate_fit_exact_powers(power):
    rates = fit_rates(rows_with(power))
    for col in CSV_COLUMNS[1:]:
        assert rates[col].rate == pytest.approx(power, abs=1e-12)
        assert rates[col].residual == pytest.approx(0.0, abs=1e-12)
        assert rates[col].monotone


def test_rate_fit_needs_three_eps_and_flags_non_monotone():
    with pytest.raises(ValueError):
        fit_rates(rows_with(1.0, (0.5, 0.25)))
    rows = rows_with(1.0, (1 / 8, 1 / 16, 1 / 32))
    rows[1].sup_err = 10.0
    report = ErrorReport.from_rows(rows)
    assert not report.rates["sup_err"].monotone
    assert "non_monotone:sup_err" in report.flags
    assert np.isfinite(report.rates["sup_err"].rate)


def test_layered_sup_error_ratio():
    model = make_model(1, layered_field([1.0, 4.0], 1), constant_field(0.25, 1))
    res = run_study(model, BOUNDS, RAMP, [1 / 8, 1 / 16], config=TIGHT, order=1)
    r = res.errors.rows
    ratio = r[0].sup_err / r[1].sup_err
    assert 2 * 0.7 <= ratio <= 2 * 1.3
    for row in r:
        assert min(row.sup_err, row.l2_err, row.h1_interior_err, row.energy_diff) >= 0


def test_first_order_beats_zero_order_on_smooth_preset():
    model = make_model(1, sinusoidal_field(2.0, 1.0, 1), constant_field(0.25, 1))
    res = run_study(model, BOUNDS, RAMP, [1 / 8, 1 / 16], config=TIGHT, order=1)
    for run in res.runs:
        assert run.by_order[1].h1_interior_err < run.by_order[0].h1_interior_err


def test_norms_stable_under_fine_refinement():
    model = make_model(1, sinusoidal_field(2.0, 1.0, 1), constant_field(0.25, 1))
    a = run_study(model, BOUNDS, RAMP, [1 / 8], cells_per_period=16, macro_cells=256, config=TIGHT)
    b = run_study(model, BOUNDS, RAMP, [1 / 8], cells_per_period=32, macro_cells=256, config=TIGHT)
    ra, rb = a.errors.rows[0], b.errors.rows[0]
    for col in ("sup_err", "l2_err", "h1_interior_err", "energy_diff"):
        va, vb = getattr(ra, col), getattr(rb, col)
        assert abs(va - vb) <= 0.05 * max(va, vb), col


def test_parallel_study_is_identical():
    model = make_model(1, layered_field([1.0, 4.0], 1), constant_field(0.25, 1))
    eps = [1 / 8, 1 / 16, 1 / 32]
    a = run_study(model, BOUNDS, RAMP, eps, jobs=1)
    b = run_study(model, BOUNDS, RAMP, eps, jobs=3)
    assert [r.csv_values() for r in a.errors.rows] == [r.csv_values() for r in b.errors.rows]
    assert [r.eps for r in b.errors.rows] == eps
