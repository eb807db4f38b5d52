import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from galton_dnp.analysis import gaussian_model
from galton_dnp.cli import main
from galton_dnp.io import sha256_file

SYSTEM = {"nuclei": [{"omega0": 0.12, "omega1": 0.8, "tilt": 0.3},
                     {"omega0": 0.31, "omega1": 2.1, "tilt": 0.5}], "rabi": 0.05}


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, out


def _system(tmp_path):
    p = tmp_path / "system.json"
    p.write_text(json.dumps(SYSTEM))
    return str(p)


def test_sweep_writes_outputs_and_manifest(tmp_path):
    code, out = _run(tmp_path, "sweep", "--n", "3", "--p", "0.5")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_states"] == 8 and summary["hyperpolarization"] > 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "sweep"
    assert sha256_file(out / "populations.csv") in json.dumps(manifest)
    ET.fromstring((out / "populations.svg").read_bytes())


def test_sweep_analytic_matches_dp(tmp_path):
    _, a = _run(tmp_path, "sweep", "--n", "4", "--p", "0.3", "--analytic", name="a")
    _, d = _run(tmp_path, "sweep", "--n", "4", "--p", "0.3", name="d")
    pa = json.loads((a / "summary.json").read_text())["hyperpolarization"]
    pd = json.loads((d / "summary.json").read_text())["hyperpolarization"]
    assert pa == pytest.approx(pd, abs=1e-12)


def test_levels_and_board(tmp_path):
    sys_file = _system(tmp_path)
    code, out = _run(tmp_path, "levels", "--system", sys_file, "--points", "21", name="lv")
    assert code == 0 and len((out / "levels.csv").read_text().splitlines()) == 1 + 21 * 8
    code, out = _run(tmp_path, "board", "--system", sys_file, "--format", "json", name="bd")
    assert code == 0
    assert len(json.loads((out / "board.json").read_text())) == 16
    assert -1 <= json.loads((out / "summary.json").read_text())["hyperpolarization"] <= 1


def test_spectrum_deterministic_across_jobs(tmp_path):
    args = ["spectrum", "--n", "3", "--pairs", "1", "--step", "2", "--seed", "4"]
    _, a = _run(tmp_path, *args, "--jobs", "1", name="a")
    _, b = _run(tmp_path, *args, "--jobs", "2", name="b")
    assert (a / "spectrum.csv").read_bytes() == (b / "spectrum.csv").read_bytes()
    _, c = _run(tmp_path, *args, "--sweep", "both", name="c")
    meta = json.loads((c / "spectrum_meta.json").read_text())
    assert meta["sign_flip"] is True
    assert (c / "spectrum_forward.csv").exists() and (c / "spectrum_reverse.csv").exists()


def test_buildup(tmp_path):
    code, out = _run(tmp_path, "buildup", "--injection", "0.2", "--relaxation", "0.05", "--points", "11")
    assert code == 0
    meta = json.loads((out / "buildup_meta.json").read_text())
    assert meta["steady_state"] == pytest.approx(0.8)


def test_fit_gaussian(tmp_path):
    x = np.linspace(-40, 40, 81)
    y = gaussian_model(x, [0.5, 4.0, 9.0])
    p = tmp_path / "s.csv"
    p.write_text("x,y\n" + "".join(f"{float(a)!r},{float(b)!r}\n" for a, b in zip(x, y)))
    code, out = _run(tmp_path, "fit", "--input", str(p))
    assert code == 0
    assert json.loads((out / "fit.json").read_text())["params"]["center"] == pytest.approx(4.0, abs=1e-6)


def test_oracle_check(tmp_path, capsys):
    code, out = _run(tmp_path, "oracle-check", "--n", "2", "--trials", "10")
    assert code == 0
    assert json.loads((out / "oracle_report.json").read_text())["passed"]
    assert "max |DP - path-sum|" in capsys.readouterr().out


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n": 2, "p": 0.9, "seed": 5}))
    _, out = _run(tmp_path, "--config", str(cfg), "sweep", "--p", "0.5")
    s = json.loads((out / "summary.json").read_text())
    assert s["n_states"] == 4 and s["p"] == 0.5
    assert json.loads((out / "manifest.json").read_text())["seed"] == 5
    _, out = _run(tmp_path, "--seed", "9", "--config", str(cfg), "sweep", name="o2")
    assert json.loads((out / "manifest.json").read_text())["seed"] == 9


@pytest.mark.parametrize("argv", [
    ["fit", "--input", "/nonexistent.csv"],
    ["sweep", "--p", "1.5"],
    ["sweep", "--seed", "-3"],
    ["levels"],
    ["nosuchcommand"],
    ["--config", "/nonexistent.json", "sweep"],
    ["oracle-check", "--n", "5"],
])
def test_validation_errors_exit_1(tmp_path, capsys, argv):
    code, out = _run(tmp_path, *argv)
    assert code == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and err["error"]


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    code, out = _run(tmp_path, "--config", str(cfg), "sweep")
    assert code == 1


def test_numerical_failure_exits_2(tmp_path, capsys):
    p = tmp_path / "sys.json"
    degenerate = {"nuclei": [{"omega0": 0.1, "omega1": 0.5}, {"omega0": 0.1, "omega1": 0.7}]}
    p.write_text(json.dumps(degenerate))
    code, out = _run(tmp_path, "board", "--system", str(p))
    assert code == 2
    assert json.loads((out / "error.json").read_text())["error"] == "CrossingNotFound"
