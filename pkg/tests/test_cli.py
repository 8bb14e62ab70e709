import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from jangads import cli

PERTURBED = {
    "n": 3, "tau": 2.25,
    "data": {"family": "conformal_perturbation", "c": 0.2, "p": 3,
             "K": {"amplitude": 0.3, "decay": 2.25}},
    "solver": {"grid_n": 128},
}


def _config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _run(tmp_path, stage, cfg=None, *extra):
    argv = [stage, "--out", str(tmp_path / "out")]
    if cfg is not None:
        argv += ["--config", _config(tmp_path, cfg)]
    return cli.main(argv + list(extra))


def _csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_verify_pure_ads(tmp_path, capsys):
    assert _run(tmp_path, "verify") == 0
    rep = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert rep["status"] == "pass"


def test_solve_then_mass(tmp_path):
    assert _run(tmp_path, "solve-radial", PERTURBED) == 0
    header, rows = _csv(tmp_path / "out" / "solve_radial.csv")
    assert header == ["rho", "f", "df_drho", "jang_residual", "barrier_lo",
                      "barrier_hi"]
    assert len(rows) == 128
    assert _run(tmp_path, "mass", PERTURBED) == 0
    header, rows = _csv(tmp_path / "out" / "mass.csv")
    assert header == ["kernel_index", "rho", "flux", "extrapolated",
                      "fit_residual"]
    rep = json.loads((tmp_path / "out" / "mass.json").read_text())
    assert rep["diagnostics"]["causality"] == "future_causal"
    assert rep["diagnostics"]["E"] > 0


def test_mass_rejects_slow_decay(tmp_path, capsys):
    code = _run(tmp_path, "mass", {"tau": 1.4})
    out = json.loads(capsys.readouterr().out)
    assert code == 2 and out["error"] == "config"
    assert any("2*tau > n" in p for p in out["problems"])


def test_config_errors_are_aggregated(tmp_path, capsys):
    bad = {"n": 9, "data": {"family": "nope"}, "solver": {"grid_n": 4},
           "warp": "flat"}
    assert _run(tmp_path, "verify", bad) == 2
    problems = json.loads(capsys.readouterr().out)["problems"]
    assert len(problems) == 4


def test_invalid_json(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["verify", "--config", str(path)]) == 2
    assert "not valid JSON" in capsys.readouterr().out


def test_barrier_stage_tau_range(tmp_path, capsys):
    assert _run(tmp_path, "barriers", {"tau": 3.2}) == 2
    assert "n/2 < tau < n" in capsys.readouterr().out


def test_barriers_csv(tmp_path):
    assert _run(tmp_path, "barriers", {"barriers": {"C0": 1.0,
                                                    "points": 500}}) == 0
    header, rows = _csv(tmp_path / "out" / "barriers.csv")
    assert header == ["rho", "xi", "xi_prime", "f_plus", "inequality_lhs",
                      "pass"]
    assert len(rows) == 500
    assert all(float(r[4]) < 0 for r in rows)


def test_runs_are_deterministic(tmp_path):
    out = tmp_path / "out"
    assert _run(tmp_path, "verify", None, "--seed", "7") == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    assert _run(tmp_path, "verify", None, "--seed", "7") == 0
    assert first == {p.name: p.read_bytes() for p in out.iterdir()}
    assert _run(tmp_path, "verify", None, "--seed", "8") == 0
    assert (out / "verify.json").read_bytes() != first["verify.json"]


def test_json_format(tmp_path):
    assert _run(tmp_path, "solve-radial", PERTURBED, "--format", "json") == 0
    rep = json.loads((tmp_path / "out" / "solve_radial.json").read_text())
    assert not (tmp_path / "out" / "solve_radial.csv").exists()
    table = rep["diagnostics"]["table"]
    assert len(table["rows"]) == 128 and table["columns"][0] == "rho"


def test_report_aggregates(tmp_path):
    assert _run(tmp_path, "verify") == 0
    assert _run(tmp_path, "barriers", {"barriers": {"C0": 1.0,
                                                    "points": 100}}) == 0
    assert _run(tmp_path, "report") == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    stages = rep["diagnostics"]["stages"]
    assert {"verify", "barriers"} <= set(stages)


def test_radial_table_config(tmp_path):
    rho = np.linspace(1e-3, 0.49, 200)
    path = tmp_path / "a.csv"
    np.savetxt(path, np.column_stack([rho, 1 + 0.1 * rho ** 3]),
               delimiter=",", header="rho,value", comments="")
    cfg = {"data": {"family": "radial_table", "tables": {"a": str(path)}},
           "solver": {"grid_n": 64}}
    assert _run(tmp_path, "solve-radial", cfg) == 0


def test_missing_table_is_config_error(tmp_path, capsys):
    cfg = {"data": {"family": "radial_table",
                    "tables": {"a": str(tmp_path / "missing.csv")}}}
    assert _run(tmp_path, "solve-radial", cfg) == 2
    assert "no such file" in capsys.readouterr().out


def test_stage_failure_exit_code(tmp_path, capsys):
    rho = np.linspace(1e-3, 0.49, 50)
    path = tmp_path / "k.csv"
    np.savetxt(path, np.column_stack([rho, np.full_like(rho, 1.2)]),
               delimiter=",", header="rho,value", comments="")
    cfg = {"data": {"family": "radial_table", "tables": {"k": str(path)}},
           "solver": {"grid_n": 64}}
    assert _run(tmp_path, "solve-radial", cfg) == 1
    out = json.loads(capsys.readouterr().out)
    assert out["error"] == "stage" and out["type"] == "PreconditionError"


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "jangads", "verify", "--out",
                          str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verify" in res.stderr


def test_unknown_stage():
    with pytest.raises(SystemExit):
        cli.main(["frobnicate"])
