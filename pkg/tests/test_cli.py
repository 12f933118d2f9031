import csv
import json
import subprocess
import sys

import pytest

from levyqueue.cli import ERRATUM, main
from levyqueue.config import preset


def _config(tmp_path, name, **change):
    d = dict(preset(name).to_dict(), **change)
    d["out_dir"] = str(tmp_path / "out")
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(d))
    return p


def _read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# levyqueue ")
    return list(csv.DictReader(lines[1:]))


def test_dump_config_round_trips(capsys):
    assert main(["tables", "--preset", "table2", "--seed", "5", "--dump-config"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["sim"]["master_seed"] == 5
    assert d["name"] == "table2"


def test_empty_grid_is_a_config_error(tmp_path):
    cfg = _config(tmp_path, "table1", horizons=[])
    assert main(["tables", "--config", str(cfg)]) == 2
    assert not (tmp_path / "out").exists()


def test_config_errors(tmp_path):
    assert main(["tables", "--config", str(tmp_path / "nope.json")]) == 2
    cfg = _config(tmp_path, "figure1")
    assert main(["tables", "--config", str(cfg)]) == 2
    assert main(["tables", "--preset", "table1", "--jobs", "0"]) == 2
    assert main(["tables", "--preset", "table1", "--replications", "0", "--out-dir", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_tables_identical_across_jobs(tmp_path):
    cfg = _config(tmp_path, "table1", alphas=[1.0, 2.0], horizons=[1.0, 5.0])
    outs = []
    for jobs in (1, 3):
        out = tmp_path / f"j{jobs}"
        args = ["tables", "--config", str(cfg), "--replications", "3000", "--out-dir", str(out)]
        assert main(args + ["--jobs", str(jobs), "--no-fixture-check"]) == 0
        outs.append((out / "table1.csv").read_bytes())
        assert not (out / "table1_fixture_diff.csv").exists()
    assert outs[0] == outs[1]


def test_fixture_diff_marks_erratum(tmp_path):
    cfg = _config(tmp_path, "table3", alphas=[1.0, 2.0], horizons=[5.0])
    assert main(["tables", "--config", str(cfg)]) == 0
    rows = _read(tmp_path / "out" / "table3_fixture_diff.csv")
    assert len(rows) == 16
    for r in rows:
        expected = ERRATUM if r["alpha"] == "1.000000" else "ok"
        assert r["status"] == expected, r
    table = _read(tmp_path / "out" / "table3.csv")
    assert [r["pi_mu_inf"][:5] for r in table if r["x"] == "0.000000" and r["alpha"] == "2.000000"] == ["3.706"]


def test_fixture_mismatch_exits_one(tmp_path):
    # the reference prints the zero-start corrected rates in the high-start block here
    cfg = _config(tmp_path, "table1", alphas=[0.1], horizons=[1.0])
    assert main(["tables", "--config", str(cfg), "--replications", "2000"]) == 1
    rows = _read(tmp_path / "out" / "table1_fixture_diff.csv")
    failed = {(r["x_case"], r["column"]) for r in rows if r["status"] == "FAIL"}
    assert ("high", "mu_tilde") in failed
    assert all(r["status"] == "ok" for r in rows if r["x_case"] == "zero")


def test_curves_mark_unstable_speeds(tmp_path):
    cfg = _config(
        tmp_path,
        "curves-mm1",
        horizons=[2.0],
        initial_states=[{"kind": "deterministic", "value": 0.0}],
        mu_grid={"start": 0.5, "stop": 2.0, "points": 4},
    )
    assert main(["curves", "--config", str(cfg), "--replications", "2000"]) == 0
    rows = _read(tmp_path / "out" / "curves-mm1_det0_T2.csv")
    assert [r["C_inf"] for r in rows] == ["n/a", "n/a", "2.000000", "1.000000"]
    assert all(float(r["C_T"]) > 0 for r in rows)


def test_figure1_stationary_line(tmp_path):
    cfg = _config(tmp_path, "figure1", t_grid={"start": 1.0, "stop": 5.0, "points": 5})
    assert main(["figure1", "--config", str(cfg), "--replications", "500"]) == 0
    rows = _read(tmp_path / "out" / "figure1.csv")
    assert len(rows) == 6
    assert {r["stationary"] for r in rows} == {"10.000000"}
    assert rows[0]["mean_deterministic_20"] == "20.000000"
    assert rows[0]["mean_exponential_15"] == "15.000000"


@pytest.mark.slow
def test_validate_passes_and_detects_fault(tmp_path):
    out = str(tmp_path / "v")
    assert main(["validate", "--out-dir", out]) == 0
    assert main(["validate", "--out-dir", out, "--inject-u3", "3"]) == 1
    rows = _read(tmp_path / "v" / "validate.csv")
    assert sum(r["status"] == "FAIL" for r in rows) == 3


def test_gap_scaling_rbm(tmp_path):
    cfg = _config(tmp_path, "gap-rbm", horizons=[10.0, 20.0, 40.0])
    assert main(["gap-scaling", "--config", str(cfg)]) == 0
    rows = _read(tmp_path / "out" / "gap-rbm.csv")
    assert [r["T"] for r in rows] == ["10.000000", "20.000000", "40.000000"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "levyqueue", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "gap-scaling" in res.stdout


def test_validate_with_reduced_replications(tmp_path):
    assert main(["validate", "--replications", "5000", "--out-dir", str(tmp_path)]) == 0
