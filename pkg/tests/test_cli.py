# test_cli.py

import json
import os

import numpy as np
import pytest

from analysis import DiagnosticsRecord
from cli import cmd_analyze, cmd_simulate, cmd_steady, main
from snapshots import DiagnosticsWriter, read_diagnostics, read_snapshot

NEUTRAL = """
nx = 8
ny = 8
dt = 1e-2
t_end = 0.1
preset = neutral-rest
output_every = 2
"""

BLOBS = """
nx = 10
ny = 10
dt = 1e-3
t_end = 0.004
preset = sheared-blobs
output_every = 2
"""


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_simulate_neutral_rest(tmp_path, no_ledger):
    out = tmp_path / "out"
    assert cmd_simulate(write_config(tmp_path, NEUTRAL), str(out)) == 0
    records = read_diagnostics(str(out / "diagnostics.csv"))
    assert [r.step for r in records] == [0, 2, 4, 6, 8, 10]
    masses = np.array([r.mass_v for r in records])
    np.testing.assert_allclose(masses, masses[0], rtol=1e-12)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "completed"
    assert manifest["config"]["preset"] == "neutral-rest"
    for path in manifest["outputs"].values():
        assert os.path.exists(path)
    name, field, time = read_snapshot(str(out / "v_final.ehd2"))
    assert name == "v" and time == pytest.approx(0.1)
    assert not (out / "error.json").exists()


def test_simulate_summary_reports_functionals(tmp_path, no_ledger):
    rest = tmp_path / "rest"
    assert cmd_simulate(write_config(tmp_path, NEUTRAL), str(rest)) == 0
    summary = json.loads((rest / "manifest.json").read_text())["summary"]
    assert summary["functionals"]["lyapunov"] == pytest.approx(0.0, abs=1e-20)
    assert summary["boltzmann_ratio_deviation"]["v"] <= 1e-12
    assert summary["envelope_constant"] == pytest.approx(0.0, abs=1e-20)
    assert summary["h_final"] == pytest.approx(summary["k_final"], rel=1e-9)

    blobs = tmp_path / "blobs"
    assert cmd_simulate(write_config(tmp_path, BLOBS, "blobs.cfg"), str(blobs)) == 0
    summary = json.loads((blobs / "manifest.json").read_text())["summary"]
    gaps = summary["csiszar_kullback"]
    for name in ("v", "w"):
        assert 0.0 < gaps[f"l1_{name}"] <= gaps[f"bound_{name}"] * (1.0 + 1e-6) + 1e-12
    assert summary["functionals"]["k_total"] == pytest.approx(summary["k_final"], rel=1e-12)
    assert summary["envelope_constant"] >= summary["functionals"]["lyapunov"]


def test_invalid_dt_exits_with_config_error(tmp_path, no_ledger, capsys):
    code = cmd_simulate(write_config(tmp_path, "nx = 8\ndt = -1\n"), str(tmp_path / "out"))
    assert code == 2
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["kind"] == "config"
    assert record["key"] == "dt"
    assert "dt" in record["message"]


def test_missing_config_is_an_io_error(tmp_path, no_ledger):
    assert cmd_simulate(str(tmp_path / "absent.cfg"), str(tmp_path / "out")) == 4


def test_resume_continues_from_checkpoint(tmp_path, no_ledger):
    first = tmp_path / "first"
    assert cmd_simulate(write_config(tmp_path, BLOBS), str(first)) == 0
    longer = BLOBS.replace("t_end = 0.004", "t_end = 0.008")
    second = tmp_path / "second"
    code = cmd_simulate(write_config(tmp_path, longer, "longer.cfg"), str(second),
                        resume=str(first / "checkpoint.npz"))
    assert code == 0
    assert [r.step for r in read_diagnostics(str(second / "diagnostics.csv"))] == [6, 8]

    full = tmp_path / "full"
    assert cmd_simulate(write_config(tmp_path, longer, "full.cfg"), str(full)) == 0
    a = read_snapshot(str(second / "phi_final.ehd2"))[1]
    b = read_snapshot(str(full / "phi_final.ehd2"))[1]
    assert np.array_equal(a.values, b.values)


def test_steady_writes_fields_and_summary(tmp_path, no_ledger):
    out = tmp_path / "steady"
    config = write_config(tmp_path, "nx = 12\nny = 12\npreset = two-blobs\n")
    assert cmd_steady(config, str(out)) == 0
    summary = json.loads((out / "steady_summary.json").read_text())
    assert summary["residual"] <= 1e-10
    assert summary["min_v"] > 0
    name, phi, _ = read_snapshot(str(out / "Phi.ehd2"))
    assert name == "Phi" and phi.grid.nx == 12


def _synthetic_diagnostics(path, rate=0.8):
    with DiagnosticsWriter(str(path)) as writer:
        for i, t in enumerate(np.linspace(0.0, 5.0, 51)):
            data = {name: 1.0 for name in DiagnosticsRecord.field_names()}
            data.update(step=i, t=float(t), dist_sq=float(4.0 * np.exp(-rate * t)))
            writer.write(DiagnosticsRecord(**data))


def test_analyze_reports_decay_fit(tmp_path, capsys):
    path = tmp_path / "diagnostics.csv"
    _synthetic_diagnostics(path)
    report = tmp_path / "fit.txt"
    assert cmd_analyze(str(path), "dist_sq", None, str(report)) == 0
    lines = dict(line.split(" = ") for line in report.read_text().splitlines())
    assert float(lines["lambda"]) == pytest.approx(0.8, abs=1e-9)
    assert float(lines["r_squared"]) == pytest.approx(1.0, abs=1e-9)
    assert "lambda" in capsys.readouterr().out


def test_analyze_error_codes(tmp_path):
    path = tmp_path / "diagnostics.csv"
    _synthetic_diagnostics(path)
    assert cmd_analyze(str(path), "no_such_column") == 2
    assert cmd_analyze(str(tmp_path / "missing.csv")) == 4
    assert cmd_analyze(str(path), "dist_sq", (4.9, 5.0)) == 3


def test_main_dispatches_subcommands(tmp_path, no_ledger):
    out = tmp_path / "out"
    assert main(["simulate", write_config(tmp_path, NEUTRAL), "--out", str(out)]) == 0
    synthetic = tmp_path / "synthetic.csv"
    _synthetic_diagnostics(synthetic, rate=0.3)
    assert main(["analyze", str(synthetic), "--window", "1.0", "4.0", "--out", str(tmp_path / "fit.txt")]) == 0
    assert "window_start = 1" in (tmp_path / "fit.txt").read_text()
