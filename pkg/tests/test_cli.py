import csv
import json

import pytest
from click.testing import CliRunner

from lowrank_newton.cli import main

SMALL = ["--nf", "20", "--ns", "20", "--num-params", "12"]


@pytest.fixture
def runner():
    return CliRunner()


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_writes_csv_and_summary(runner, tmp_path):
    out, summ = tmp_path / "r.csv", tmp_path / "s.json"
    res = runner.invoke(main, ["run", *SMALL, "-K", "3", "--out", str(out), "--summary", str(summ)])
    assert res.exit_code == 0, res.output
    data = rows(out)
    assert len(data) == 12 and {r["method"] for r in data} == {"algorithm1"}
    summary = json.loads(summ.read_text())
    assert summary["matrix_equation_steps"] == 3
    assert summary["config"]["subsets"] == 3
    nu_lo, nu_hi = summary["config"]["poisson_ratio_range"]
    assert round(nu_lo, 5) == 0.38462 and round(nu_hi, 5) == 0.45455


def test_baseline_defaults_to_tight_tolerance(runner, tmp_path):
    out = tmp_path / "b.csv"
    res = runner.invoke(main, ["baseline", *SMALL, "--out", str(out)])
    assert res.exit_code == 0, res.output
    data = rows(out)
    assert all(r["subset"] == "-1" for r in data)
    assert max(float(r["rel_residual"]) for r in data) <= 1e-12


def test_compare_merges_methods(runner, tmp_path):
    out = tmp_path / "c.csv"
    res = runner.invoke(main, ["compare", *SMALL, "-K", "2", "--out", str(out)])
    assert res.exit_code == 0, res.output
    data = rows(out)
    assert len(data) == 24
    assert [r["method"] for r in data[:2]] == ["algorithm1", "baseline"]
    assert "ratio=" in res.output


def test_svd_and_spectrum(runner, tmp_path):
    out = tmp_path / "sv.csv"
    res = runner.invoke(main, ["svd", *SMALL, "-K", "2", "--out", str(out)])
    assert res.exit_code == 0, res.output
    assert rows(out)[0].keys() == {"subset", "j", "sigma"}
    res = runner.invoke(main, ["spectrum", *SMALL, "-K", "2"])
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert lines[0] == "subset,d,c" and len(lines) == 3


def test_config_file_and_flag_precedence(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"nf": 20, "ns": 20, "num-params": 9, "subsets": 4}))
    out = tmp_path / "r.csv"
    res = runner.invoke(main, ["run", "--config", str(cfg), "--subsets", "3", "--out", str(out),
                               "--summary", str(tmp_path / "s.json")])
    assert res.exit_code == 0, res.output
    assert len(rows(out)) == 9
    assert json.loads((tmp_path / "s.json").read_text())["config"]["subsets"] == 3


def test_unknown_config_key_is_usage_error(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    res = runner.invoke(main, ["run", "--config", str(cfg)])
    assert res.exit_code == 2 and "colour" in res.output


def test_partial_failure_exit_code(runner, tmp_path):
    cfg = tmp_path / "cfg.json"
    # a single Newton iteration cannot reach the median tolerance
    cfg.write_text(json.dumps({"newton_max_iter": 1}))
    res = runner.invoke(main, ["run", *SMALL, "-K", "2", "--config", str(cfg), "--out", str(tmp_path / "r.csv")])
    assert res.exit_code == 2, res.output


def test_hard_error_exit_code(runner, tmp_path):
    res = runner.invoke(main, ["run", *SMALL, "-K", "0", "--out", str(tmp_path / "r.csv")])
    assert res.exit_code == 1
    assert "error:" in res.output


def test_unwritable_output(runner, tmp_path):
    res = runner.invoke(main, ["run", *SMALL, "--out", str(tmp_path / "nope" / "r.csv")])
    assert res.exit_code == 1 and "nope" in res.output
