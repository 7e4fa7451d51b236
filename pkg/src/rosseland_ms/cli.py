"""``rosseland-ms <command> --config <path> [--out <dir>] [--jobs N]``.

Exit status: 0 success, 1 solver flags raised, 2 configuration error,
3 unexpected failure.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import io
from .cell import build_table, solve_cell_full
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .corrector import CSV_COLUMNS
from .fine import EpsilonProblem, solve_fine
from .grid import Grid, ScalarField
from .macro import PeriodicCoefficient, solve
from .parabolic import ParabolicProblem, TimeGrid, Trajectory, parabolic_solve
from .presets import PresetSpec, steady_state_boundary
from .study import run_study

EXIT_OK, EXIT_SOFT, EXIT_CONFIG, EXIT_CRASH = 0, 1, 2, 3

SEED_VAR = "ROSSELAND_MS_SEED"


def _profile(field: ScalarField):
    """Nodes along x1 (the x2 midline in 2D) and the field values there."""
    grid = field.grid
    x = grid.axis_nodes(0)
    v = field.reshaped()
    if grid.dim == 2:
        v = v[:, v.shape[1] // 2]
    return x, v


def _emit_field(out: Path, stem: str, field: ScalarField, figures: bool, title: str) -> None:
    io.write_field(out / f"{stem}.txt", field)
    x, v = _profile(field)
    io.write_xy(out / f"{stem}_profile.dat", x, v)
    if not figures:
        return
    from . import plotting

    if field.grid.dim == 1:
        plotting.plot_profiles(out / f"{stem}.png", x, {stem: v}, title=title)
    else:
        (a1, b1), (a2, b2) = field.grid.extent
        plotting.plot_field2d(out / f"{stem}.png", field.reshaped(), (a1, b1, a2, b2), title=title)


def _emit_table(out: Path, table, figures: bool) -> None:
    io.write_csv(out / "table.csv", table.header(), table.rows())
    d = table.dim
    for k in range(d):
        io.write_xy(out / f"a0_{k + 1}{k + 1}.dat", table.z, table.a0[:, k, k])
    if figures:
        from . import plotting

        plotting.plot_table(out / "table.png", table.z, table.a0)


def _audit(report) -> dict:
    return asdict(report.audit) if report.audit is not None else {}


def _run_cell(cfg: RunConfig, out: Path, jobs: int) -> dict:
    n = cfg.get("grid", "cell_cells")
    grid = Grid.unit_cell(n, cfg.model.dim)
    second = cfg.get("table", "second_order")
    table = build_table(cfg.model, cfg.bounds, cfg.get("table", "samples"), grid, second_order=second)
    figures = cfg.get("output", "figures")
    _emit_table(out, table, figures)
    z_mid = 0.5 * (cfg.bounds.T_min + cfg.bounds.upper)
    cell = solve_cell_full(cfg.model, z_mid, grid, second_order=second)
    for j, N in enumerate(cell.correctors):
        _emit_field(out, f"corrector_N{j + 1}", ScalarField(grid, N), figures, f"N{j + 1} at z = {z_mid:g}")
    if cell.second_order:
        for (k, l), M in sorted(cell.second_order.items()):
            io.write_field(out / f"corrector_M{k + 1}{l + 1}.txt", ScalarField(grid, M))
    return {
        "cell": {
            "cells_per_axis": n,
            "z_corrector": z_mid,
            "a0_at_z_corrector": cell.a0.tolist(),
            "iterations": list(cell.iterations),
        },
        "reports": [],
        "audits": [],
    }


def _run_macro(cfg: RunConfig, out: Path, jobs: int) -> dict:
    dim = cfg.model.dim
    grid = Grid((cfg.get("grid", "cells"),) * dim)
    figures = cfg.get("output", "figures")
    if cfg.get("problem", "coefficient") == "homogenized":
        cell_grid = Grid.unit_cell(cfg.get("grid", "cell_cells"), dim)
        source = build_table(cfg.model, cfg.bounds, cfg.get("table", "samples"), cell_grid, keep_cells=False)
        _emit_table(out, source, figures)
    else:
        source = PeriodicCoefficient(cfg.model)
    u, report = solve(source, grid, cfg.bc, cfg.bounds, cfg.f, cfg.solver)
    _emit_field(out, "u", u, figures, f"{cfg.get('problem', 'coefficient')} solution")
    return {"reports": [report.to_dict()], "audits": [_audit(report)]}


def _run_fine(cfg: RunConfig, out: Path, jobs: int) -> dict:
    eps = cfg.get("fine", "eps")
    problem = EpsilonProblem(eps, cfg.model, cfg.bc, cfg.bounds, cfg.get("fine", "cells_per_period"), cfg.f)
    u, report = solve_fine(problem, cfg.solver)
    _emit_field(out, "u_eps", u, cfg.get("output", "figures"), f"ε = {eps:g}")
    return {"eps": eps, "reports": [report.to_dict()], "audits": [_audit(report)]}


def _run_study(cfg: RunConfig, out: Path, jobs: int) -> dict:
    eps_list = cfg.get("study", "eps")
    res = run_study(
        cfg.model,
        cfg.bounds,
        cfg.bc,
        eps_list,
        f=cfg.f,
        cells_per_period=cfg.get("study", "cells_per_period"),
        macro_cells=cfg.get("study", "macro_cells"),
        table_samples=cfg.get("table", "samples"),
        config=cfg.solver,
        order=cfg.get("study", "order"),
        lookup=cfg.get("study", "lookup"),
        interior=cfg.get("study", "interior"),
        jobs=jobs,
    )
    figures = cfg.get("output", "figures")
    rows = res.errors.rows
    io.write_csv(out / "errors.csv", CSV_COLUMNS, [r.csv_values() for r in rows])
    eps = [r.eps for r in rows]
    cols = {c: [getattr(r, c) for r in rows] for c in CSV_COLUMNS[1:] + ("grad_interior_err",)}
    for c, v in cols.items():
        io.write_xy(out / f"errors_{c}.dat", eps, v)
    _emit_table(out, res.table, figures)
    _emit_field(out, "u0", res.u0, figures, "homogenized solution")
    smallest = min(res.runs, key=lambda r: r.eps)
    _emit_field(out, "u_eps_min", smallest.u_eps, figures, f"ε = {smallest.eps:g}")
    if figures and len(set(eps)) >= 3:
        from . import plotting

        plotting.plot_convergence(out / "convergence.png", eps, cols, res.errors.rates)
    return {
        "errors": res.errors.to_dict(),
        "rates": {k: asdict(v) for k, v in res.errors.rates.items()},
        "rates_by_order": {
            str(k): {c: asdict(v) for c, v in rates.items()} for k, rates in res.order_rates.items()
        },
        "reports": [r.to_dict() for r in res.reports],
        "report_labels": ["homogenized"] + [f"eps={r.eps!r}" for r in res.runs],
        "audits": [_audit(r) for r in res.reports],
    }


def _run_parabolic(cfg: RunConfig, out: Path, jobs: int) -> dict:
    dim = cfg.model.dim
    grid = Grid((cfg.get("grid", "cells"),) * dim)
    g = cfg.g
    if g is None:
        g = steady_state_boundary(PresetSpec("config", cfg.model, cfg.bounds, cfg.bc))
    delay = cfg.get("parabolic", "delay")
    history = None
    problem = ParabolicProblem(grid, PeriodicCoefficient(cfg.model), g, cfg.bounds)
    if delay is not None:
        history = Trajectory.constant(grid, problem.initial(), -delay, 0.0)
        problem = ParabolicProblem(grid, problem.source, g, cfg.bounds, delay=delay, history=history)
    tg = TimeGrid(cfg.get("parabolic", "horizon"), cfg.get("parabolic", "step"))
    traj, reports = parabolic_solve(problem, tg, cfg.solver, cfg.get("parabolic", "snapshot_every"))

    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    for i, (t, v) in enumerate(zip(traj.times, traj.fields)):
        io.write_field(snaps / f"u_{i:05d}.txt", ScalarField(grid, v))
    io.write_csv(snaps / "times.csv", ["index", "t"], [(i, t) for i, t in enumerate(traj.times)])
    times = [tg.time(j + 1) for j in range(tg.steps)]
    lows = [r.audit.min for r in reports]
    highs = [r.audit.max for r in reports]
    io.write_xy(out / "max_vs_t.dat", times, highs)
    io.write_xy(out / "min_vs_t.dat", times, lows)
    final = ScalarField(grid, traj.fields[-1])
    figures = cfg.get("output", "figures")
    _emit_field(out, "u_final", final, figures, f"t = {traj.times[-1]:g}")
    if figures:
        from . import plotting

        plotting.plot_bounds_history(out / "bounds_vs_t.png", times, lows, highs, cfg.bounds.T_min, cfg.bounds.T_max)
        if dim == 1:
            x = grid.axis_nodes(0)
            pick = np.unique(np.linspace(0, len(traj.times) - 1, 6).astype(int))
            curves = {f"t = {traj.times[i]:.3g}": traj.fields[i] for i in pick}
            plotting.plot_profiles(out / "snapshots.png", x, curves)
    steps = [
        {"t": t, "iterations": r.iterations, "min": r.audit.min, "max": r.audit.max, "flags": list(r.flags)}
        for t, r in zip(times, reports)
    ]
    worst = max(reports, key=lambda r: r.audit.violation)
    return {
        "steps": steps,
        "reports": [worst.to_dict()],
        "report_labels": ["worst step"],
        "audits": [
            {
                "min": min(lows),
                "max": max(highs),
                "lower": cfg.bounds.T_min,
                "upper": cfg.bounds.upper,
                "violation": max(r.audit.violation for r in reports),
                "passed": all(r.audit.passed for r in reports),
            }
        ],
        "flags": sorted({f for r in reports for f in r.flags}),
    }


RUNNERS = {
    "cell": _run_cell,
    "macro": _run_macro,
    "fine": _run_fine,
    "study": _run_study,
    "parabolic": _run_parabolic,
}


def run(cfg: RunConfig, out, jobs: int = 1) -> int:
    """Execute a validated configuration, write artifacts into ``out`` and return the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[cfg.command](cfg, out, jobs)
    flags = list(result.pop("flags", []))
    for rep in result.get("reports", []):
        flags.extend(f for f in rep["flags"] if f not in flags)
    summary = {"config": cfg.echo(), **result, "flags": flags, "status": "soft-fail" if flags else "ok"}
    io.write_json(out / "summary.json", summary)
    return EXIT_SOFT if flags else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rosseland-ms", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--jobs", type=int, default=1, help="concurrent ε solves for 'study'")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    os.environ.get(SEED_VAR)  # reserved; solvers are deterministic
    if args.jobs < 1:
        print(f"error: --jobs must be at least 1, got {args.jobs}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"{args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = run(cfg, args.out, args.jobs)
    except Exception:
        traceback.print_exc()
        return EXIT_CRASH
    label = "soft-fail: solver flags raised" if status == EXIT_SOFT else "ok"
    print(f"{args.command}: {label}; outputs in {args.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
