import csv
import io
import json
import math
import sys

import pytest

import main as cli
from errors import ConfigError, InvariantViolation
from report import SCHEMA, Table, render, write_report
from scripts.build_report_index import build_index

R_STEP_AT_2 = (2.0 - math.sqrt(2.0)) / (2.0 + math.sqrt(2.0))


@pytest.fixture(autouse=True)
def quiet(monkeypatch):
    monkeypatch.setenv("SCATTER_QUIET", "1")
    monkeypatch.setattr(cli, "THREADS", 2)


@pytest.fixture
def pure_step_file(potentials_dir):
    return str(potentials_dir / "pure_step.json")


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


# ----------------
# amplitudes
# ----------------
def test_amplitudes_csv(tmp_path, pure_step_file):
    out = tmp_path / "amp.csv"
    code = cli.run(["amplitudes", "--potential", pure_step_file, "--pmin", "1", "--pmax", "2", "--count", "2", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    assert [float(r["p"]) for r in rows] == [1.0, 2.0]
    below, above = rows
    assert below["channel"] == "evanescent"
    assert float(below["q_im"]) == pytest.approx(1.0)
    assert below["t_r_re"] == "closed" and below["r_r_im"] == "closed"
    assert float(above["r_l_re"]) == pytest.approx(R_STEP_AT_2, abs=1e-14)
    assert float(above["r_l_im"]) == pytest.approx(0.0, abs=1e-14)
    assert float(above["max_residual"]) < 1e-12


def test_amplitudes_are_reproducible(tmp_path, pure_step_file):
    argv = ["amplitudes", "--potential", pure_step_file, "--count", "7", "--quantities", "exact,mm1,lp1"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    cli.run(argv + ["--out", str(first)])
    cli.run(argv + ["--out", str(second)])
    assert first.read_bytes() == second.read_bytes()
    header = first.read_text().splitlines()[0].split(",")
    assert "exact_r_l_re" in header and "mm1_im" in header and "lp1_re" in header


def test_amplitudes_json(capsys, pure_step_file):
    cli.run(["amplitudes", "--potential", pure_step_file, "--pmin", "1", "--pmax", "2", "--count", "2", "--format", "json", "--out", "-"])
    body = json.loads(capsys.readouterr().out)
    assert body["schema"] == SCHEMA
    assert body["command"] == "amplitudes"
    assert body["meta"]["count"] == 2
    assert body["rows"][0]["t_r"] is None
    assert body["rows"][1]["r_l"]["re"] == pytest.approx(R_STEP_AT_2, abs=1e-14)


def test_amplitudes_by_grid_method(tmp_path, potentials_dir):
    out = tmp_path / "amp.csv"
    pot = str(potentials_dir / "step_delta.json")
    cli.run(["amplitudes", "--potential", pot, "--method", "lp", "--pmin", "1.8", "--pmax", "2.2", "--count", "3", "--out", str(out)])
    for row in read_csv(out):
        assert row["method"] == "lp"
        assert float(row["max_residual"]) < 1e-10


def test_threshold_row_is_closed(pure_step_file):
    config = cli.ScanConfig(cli.load_potential(pure_step_file), "test", 1.0, 2.0, 2)
    row = cli.amplitude_row(config, math.sqrt(2.0))
    assert row["channel"] == "threshold"
    assert row["t_l"] is None and row["max_residual"] is None


@pytest.mark.parametrize(
    "flags",
    [
        ["--pmin", "0"],
        ["--pmin", "2", "--pmax", "1"],
        ["--count", "1"],
        ["--grid", "10"],
        ["--quantities", "mm1,bogus"],
    ],
)
def test_bad_scan_flags(flags, pure_step_file):
    with pytest.raises(ConfigError):
        cli.run(["amplitudes", "--potential", pure_step_file, "--out", "-"] + flags)


def test_malformed_potential(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "v0": 1.0,\n  "a": 0.0\n  "b": 0.0\n}\n')
    with pytest.raises(ConfigError, match="line 4"):
        cli.run(["amplitudes", "--potential", str(bad), "--out", "-"])


def test_main_exit_code(tmp_path, monkeypatch):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    monkeypatch.setattr(sys, "argv", ["scatter", "amplitudes", "--potential", str(bad), "--out", "-"])
    with pytest.raises(SystemExit) as excinfo:
        cli.main()
    assert excinfo.value.code == ConfigError.exit_code


# ----------------
# figure1
# ----------------
def test_figure1_rows(tmp_path):
    out = tmp_path / "fig.csv"
    cli.run(["figure1", "--pmin", "1", "--pmax", "2", "--count", "2", "--out", str(out)])
    below, above = read_csv(out)
    assert float(below["exact"]) == pytest.approx(1.0, abs=1e-12)
    assert float(above["exact"]) == pytest.approx(0.0294706, rel=1e-5)
    assert float(above["mm1"]) == pytest.approx(0.01565, rel=1e-10)
    assert float(above["lp1"]) == pytest.approx(0.0294844, rel=1e-5)
    assert float(above["mm2_corrected"]) > 0.0


# ----------------
# verify
# ----------------
def test_verify_passes_on_pure_step(tmp_path, pure_step_file):
    out = tmp_path / "verify.csv"
    code = cli.run(["verify", "--potential", pure_step_file, "--pmin", "2", "--pmax", "3", "--count", "2", "--out", str(out)])
    assert code == 0
    rows = read_csv(out)
    names = {r["name"] for r in rows}
    assert {"flux_left", "time_reversal", "projector_oracle", "mm_vs_transfer", "lp_vs_transfer", "two_potential_q_N_-"} <= names
    assert all(r["passed"] == "1" for r in rows)


def test_verify_catches_corruption(tmp_path, pure_step_file):
    out = tmp_path / "verify.csv"
    argv = ["verify", "--potential", pure_step_file, "--pmin", "2", "--pmax", "3", "--count", "2", "--corrupt", "r_l", "--out", str(out)]
    with pytest.raises(InvariantViolation) as excinfo:
        cli.run(argv)
    assert excinfo.value.name == "flux_left"
    assert excinfo.value.exit_code == 4
    failed = {r["name"] for r in read_csv(out) if r["passed"] == "0"}
    assert "flux_left" in failed and "time_reversal" not in failed


def test_verify_bound_state_suite():
    from potential import step_delta

    rows = cli.verify_bound_states(step_delta(0.5, -1.0), "delta")
    assert [r["name"] for r in rows] == ["bound_state_levels"]
    assert rows[0]["passed"]


# ----------------
# greens-dump
# ----------------
def test_greens_dump_free_diagonal(capsys):
    cli.run(["greens-dump", "--kernel", "free", "--energy", "2", "--xp", "0", "--xmin", "-1", "--xmax", "1", "--count", "3", "--out", "-"])
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [float(r["x"]) for r in rows] == [-1.0, 0.0, 1.0]
    assert float(rows[1]["g_re"]) == pytest.approx(0.0, abs=1e-14)
    assert float(rows[1]["g_im"]) == pytest.approx(-0.5, abs=1e-14)
    assert rows[0]["g_re"] == rows[2]["g_re"]


# ----------------
# Reports
# ----------------
def test_write_report_default_name(tmp_path):
    table = Table("demo", ["p", "value"], [{"p": 1.0, "value": 1 + 2j}, {"p": 2.0, "value": None}])
    path = write_report(table, "csv", out_dir=str(tmp_path))
    assert path.startswith(tmp_path.as_posix())
    name = path.rsplit("/", 1)[-1]
    assert name.startswith("demo_") and name.endswith(".csv")
    assert read_csv(path)[1]["value_re"] == "closed"


def test_render_rejects_unknown_format():
    with pytest.raises(ConfigError):
        render(Table("demo", ["p"]), "xml")


def test_build_index(tmp_path):
    for name in ("verify_20240101_000000_aaa.csv", "amplitudes_20250101_000000_bbb.json", "notes.txt"):
        (tmp_path / name).write_text("x")
    index = build_index(str(tmp_path))
    assert index["count"] == 2
    assert index["reports"][0] == "amplitudes_20250101_000000_bbb.json"
    assert json.loads((tmp_path / "index.json").read_text())["count"] == 2
    assert build_index(str(tmp_path / "missing")) == {}
