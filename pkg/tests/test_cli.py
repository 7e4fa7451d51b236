import json
import textwrap
from pathlib import Path

import numpy as np
import pytest

from rosseland_ms import io
from rosseland_ms.cli import main
from rosseland_ms.config import ConfigError, parse_text
from rosseland_ms.grid import Grid, ScalarField
from rosseland_ms.material import eval_coefficient
from rosseland_ms.presets import PRESETS, preset


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


# -- presets -------------------------------------------------------------------


def test_preset_examples():
    y = np.array([[0.25], [0.75]])
    lay = preset("layered1d")
    np.testing.assert_allclose(eval_coefficient(lay.model, np.ones(2), y)[:, 0, 0], [2.0, 5.0])
    lay0 = preset("layered1d", B=0.0)
    assert not lay0.model.radiative
    np.testing.assert_allclose(eval_coefficient(lay0.model, np.full(2, 1.7), y)[:, 0, 0], [1.0, 4.0])
    const = preset("const")
    np.testing.assert_allclose(eval_coefficient(const.model, np.ones(2), y)[:, 0, 0], 2.0)
    k = preset("kirchhoff1d")
    assert k.bc.value(np.array([[0.0], [1.0]])).tolist() == [1.0, 2.0]
    assert preset("const", dim=2).model.dim == 2


def test_unknown_preset_lists_alternatives():
    with pytest.raises(ValueError) as info:
        preset("layered3d")
    for name in PRESETS:
        assert name in str(info.value)


# -- io ------------------------------------------------------------------------


def test_float_format_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17, 2.0):
        s = io.fmt(v)
        assert float(s) == v
        assert len(s.split("e")[0].replace("-", "").replace(".", "")) == 17
    assert io.fmt(float("nan")) == "nan"


def test_csv_layout(tmp_path):
    io.write_csv(tmp_path / "a.csv", ["eps", "err"], [[0.125, 1e-3], [0.0625, 5e-4]])
    raw = (tmp_path / "a.csv").read_bytes()
    assert raw.startswith(b"eps,err\n") and b"\r" not in raw and raw.endswith(b"\n")
    header, data = io.read_csv(tmp_path / "a.csv")
    assert header == ["eps", "err"] and data.shape == (2, 2)


def test_field_file_round_trip(tmp_path):
    grid = Grid((3, 2))
    field = ScalarField(grid, np.arange(12, dtype=float) / 7)
    io.write_field(tmp_path / "u.txt", field)
    first = (tmp_path / "u.txt").read_text().splitlines()[0]
    assert first == "2 4 3"
    back = io.field_from_file(tmp_path / "u.txt", grid)
    assert np.array_equal(back.values, field.values)
    with pytest.raises(ValueError):
        io.field_from_file(tmp_path / "u.txt", Grid((4, 2)))


def test_json_is_valid_and_stable():
    obj = {"a": [1.0, 2.5], "b": {"c": None, "d": True, "e": float("inf")}, "f": [{"g": 1}], "h": []}
    text = io.dumps(obj)
    assert text == io.dumps(obj)
    back = json.loads(text)
    assert back["a"] == [1.0, 2.5] and back["b"]["e"] == "inf" and back["b"]["d"] is True


# -- config --------------------------------------------------------------------


def test_unknown_key_names_key_and_line():
    text = "[problem]\npreset = layered1d\n\n[solver]\ntol = 1e-9\nmaxiter = 5\n"
    with pytest.raises(ConfigError) as info:
        parse_text(text, "macro")
    assert info.value.key == "maxiter" and info.value.line == 6
    assert "maxiter" in str(info.value) and "line 6" in str(info.value)


@pytest.mark.parametrize(
    "text, key, line",
    [
        ("[problem]\npreset = layered1d\n[bounds]\nT_max = abc\n", "T_max", 4),
        ("[problem]\npreset = layered1d\n[study]\neps = 1/8, 0.3\n", "eps", 4),
        ("[problem]\npreset = layered1d\n[bc]\nkind = robin\nalpha = 1\n", "u_gas", None),
        ("[problem]\npreset = layered1d\n[bc]\nleft = 0.5\nright = 2\n", "left", 4),
        ("[problem]\npreset = layered1d\n[nonsense]\nx = 1\n", "nonsense", 3),
        ("[problem]\npreset = layered1d\npreset = const\n", "preset", 3),
        ("[problem]\nK_cells = 1, 4\n", "T_min", None),
        ("[problem]\npreset = layered1d\n[solver]\nrelaxation = 2\n", "relaxation", 4),
        ("[problem]\npreset = layered1d\n[study]\norder = 3\n", "order", 4),
    ],
)
def test_validation_errors(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_text(text, "study")
    assert info.value.key == key
    assert info.value.line == line


def test_inline_coefficients_and_fractions():
    cfg = parse_text(
        "[problem]\nK_cells = 1, 4; 4, 1\nB_cells = 0.1, 0; 0, 0.1\n[bounds]\nT_min = 1\nT_max = 2\n"
        "[bc]\nvalue = 3/2\n[study]\neps = 1/4, 1/8\n",
        "study",
    )
    assert cfg.model.dim == 2 and cfg.model.radiative
    assert cfg.bc.value == 1.5
    assert cfg.get("study", "eps") == [0.25, 0.125]


def test_echo_lists_defaults():
    cfg = parse_text("[problem]\npreset = kirchhoff1d\n", "macro")
    echo = cfg.echo()
    assert echo["grid"]["cells"] == 64 and "study" not in echo


# -- cli -----------------------------------------------------------------------


def test_cell_on_constant_preset(tmp_path):
    cfg = write(tmp_path, "[problem]\npreset = const\n[table]\nsamples = 5\n[output]\nfigures = no\n")
    assert main(["cell", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    header, data = io.read_csv(tmp_path / "o" / "table.csv")
    assert header == ["z", "a0_11"]
    np.testing.assert_allclose(data[:, 1], 1 + data[:, 0] ** 3, rtol=1e-15)


def test_study_outputs(tmp_path):
    cfg = write(tmp_path, "[problem]\npreset = layered1d\n[study]\neps = 1/8, 1/16, 1/32\n")
    out = tmp_path / "o"
    assert main(["study", "--config", str(cfg), "--out", str(out)]) == 0
    header, rows = io.read_csv(out / "errors.csv")
    assert header == ["eps", "sup_err", "l2_err", "h1_interior_err", "energy_diff"]
    assert rows.shape == (3, 5)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["problem"]["preset"] == "layered1d"
    assert summary["rates"]["sup_err"]["rate"] >= 0.8
    assert len(summary["reports"]) == 4 and len(summary["audits"]) == 4
    assert all(a["passed"] for a in summary["audits"])
    assert (out / "convergence.png").read_bytes()[:4] == b"\x89PNG"
    xy = np.loadtxt(out / "errors_sup_err.dat")
    assert xy.shape == (3, 2)


def test_study_is_byte_identical(tmp_path, monkeypatch):
    cfg = write(tmp_path, "[problem]\npreset = smooth1d\n[study]\neps = 1/4, 1/8, 1/16\n")
    main(["study", "--config", str(cfg), "--out", str(tmp_path / "a")])
    monkeypatch.setenv("ROSSELAND_MS_SEED", "12345")
    main(["study", "--config", str(cfg), "--out", str(tmp_path / "b"), "--jobs", "2"])
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_malformed_key_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\npreset = layered1d\n[grid]\ncels = 8\n")
    assert main(["macro", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "cels" in err and "line 4" in err
    assert not (tmp_path / "o").exists()


def test_soft_fail_exit_code(tmp_path):
    cfg = write(tmp_path, "[problem]\npreset = kirchhoff1d\n[solver]\nmax_iter = 1\n[output]\nfigures = off\n")
    out = tmp_path / "o"
    assert main(["macro", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "soft-fail" and "not_converged" in summary["flags"]


def test_argument_errors(tmp_path):
    cfg = write(tmp_path, "[problem]\npreset = layered1d\n")
    assert main(["macro", "--config", str(tmp_path / "missing.ini")]) == 2
    assert main(["macro", "--config", str(cfg), "--jobs", "0"]) == 2
    assert main(["explode", "--config", str(cfg)]) == 2


@pytest.mark.parametrize(
    "command, text, expected",
    [
        ("macro", "[problem]\npreset = checkerboard2d\n[grid]\ncells = 16\ncell_cells = 16\n", "u.txt"),
        ("macro", "[problem]\npreset = layered1d\ncoefficient = plain\n[bc]\nkind = robin\nalpha = 2\nu_gas = 1.5\n", "u.txt"),
        ("fine", "[problem]\npreset = layered1d\n[fine]\neps = 1/4\n", "u_eps.txt"),
        ("parabolic", "[problem]\npreset = parabolic-linear\n[grid]\ncells = 32\n[parabolic]\nstep = 0.01\n", "snapshots/times.csv"),
        ("parabolic", "[problem]\npreset = kirchhoff1d\n[grid]\ncells = 16\n[parabolic]\nhorizon = 0.05\nstep = 0.01\ndelay = 0.02\n", "u_final.txt"),
    ],
)
def test_other_commands(tmp_path, command, text, expected):
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / expected).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["audits"]


def test_parabolic_snapshot_files(tmp_path):
    cfg = write(
        tmp_path,
        "[problem]\npreset = parabolic-linear\n[grid]\ncells = 16\n[parabolic]\nhorizon = 0.1\nstep = 0.01\nsnapshot_every = 5\n",
    )
    out = tmp_path / "o"
    assert main(["parabolic", "--config", str(cfg), "--out", str(out)]) == 0
    header, times = io.read_csv(out / "snapshots" / "times.csv")
    np.testing.assert_allclose(times[:, 1], [0.0, 0.05, 0.1])
    shape, first = io.read_field(out / "snapshots" / "u_00000.txt")
    assert shape == (17,)
    np.testing.assert_allclose(first[8], 2.0)


SAMPLES = Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("name", sorted(p.name for p in SAMPLES.glob("*.ini")))
def test_sample_configs_parse(name):
    command = name.split("_")[0].split(".")[0]
    cfg = parse_text((SAMPLES / name).read_text(), command, name)
    assert cfg.command == command
