import csv

import numpy as np
import pytest

import lowrank_newton.driver as drv
from lowrank_newton.driver import (
    ALGORITHM1,
    CSV_HEADER,
    evaluate,
    export_csv,
    export_singular_values,
    read_csv,
    run_algorithm1,
    spectrum_table,
    write_summary,
)
from lowrank_newton.matrixeq import Diverged
from lowrank_newton.newton import NewtonConfig, newton_solve
from lowrank_newton.partition import ParameterSet, split
from lowrank_newton.problem import ModelConfig, build_problem


@pytest.fixture(scope="module")
def default_run(default_problem, default_params):
    return run_algorithm1(default_problem, default_params, 8)


def test_singletons_take_one_exact_step(small_problem, small_cfg):
    S = small_cfg.parameters()
    X, report = run_algorithm1(small_problem, S, S.m1, R=2)
    for i, mu in enumerate(S.values):
        x_med = newton_solve(small_problem, mu, NewtonConfig(1e-4)).x
        assert report.rel_residual[i] < small_problem.relative_residual(x_med, mu)
    assert report.total_newton_steps == sum(s.newton_iterations for s in report.subsets) + S.m1


def test_rank_one_budget_keeps_median_start(small_problem, small_cfg):
    S = small_cfg.parameters()
    X, report = run_algorithm1(small_problem, S, 3, R=1)
    # only the rank-one start x_med 1^T survives
    assert X.rank == 3 and all(b.S_hat.rank == 0 for b in X.blocks)
    for k, block in enumerate(X.blocks):
        np.testing.assert_array_equal(X.column(X.partition.indices(k)[0]), block.x_med)


def test_invalid_rank_budget(small_problem, small_cfg):
    with pytest.raises(ValueError):
        run_algorithm1(small_problem, small_cfg.parameters(), 2, R=0)


def test_reconstruction_consistency(default_run, rng):
    X, _ = default_run
    dense = X.to_dense()
    assert dense.shape == (399, 200)
    for i in rng.choice(200, 20, replace=False):
        np.testing.assert_allclose(X.column(i), dense[:, i], rtol=0, atol=1e-13)


def test_global_rank_budget(default_run):
    X, _ = default_run
    assert X.rank <= 8 * 10
    assert all(b.S_hat.rank <= 9 for b in X.blocks)


def test_step_accounting(default_run):
    _, report = default_run
    summary = report.summary()
    assert summary["matrix_equation_steps"] == 8
    assert report.total_newton_steps == summary["median_newton_steps"] + summary["matrix_equation_steps"]
    assert report.total_newton_steps <= 8 * 50 + 8
    assert not report.failed_subsets
    assert np.all(report.rel_residual >= 0)


def test_median_columns_meet_tolerance(default_run, default_problem):
    X, report = default_run
    for k in range(X.partition.K):
        i = X.partition.median_index(k)
        assert report.rel_residual[i] <= 1e-4


def test_run_is_deterministic(default_problem, default_params, default_run):
    _, first = default_run
    _, second = run_algorithm1(default_problem, default_params, 8, workers=3)
    np.testing.assert_array_equal(first.rel_residual, second.rel_residual)
    assert [s.cheb_iterations for s in first.subsets] == [s.cheb_iterations for s in second.subsets]


def test_evaluate_normalisation(small_problem, small_cfg):
    S = small_cfg.parameters()

    class Columns:
        def __init__(self, cols):
            self.cols = cols

        def column(self, i):
            return self.cols[i]

    ones = Columns([small_problem.b_D] * S.m1)
    np.testing.assert_allclose(evaluate(small_problem, ones, S), 1.0, rtol=1e-15)
    exact = Columns([newton_solve(small_problem, mu, NewtonConfig(1e-13)).x for mu in S.values])
    assert np.all(evaluate(small_problem, exact, S) <= 1e-12)


def test_failed_subset_is_isolated(small_problem, small_cfg, monkeypatch):
    real = drv.subset_newton_step

    def flaky(P, partition, k, x_med, cfg=None):
        if k == 1:
            raise Diverged("forced", [1.0, 50.0])
        return real(P, partition, k, x_med, cfg)

    monkeypatch.setattr(drv, "subset_newton_step", flaky)
    S = small_cfg.parameters()
    X, report = run_algorithm1(small_problem, S, 3)
    assert report.failed_subsets == [1]
    bad = list(X.partition.indices(1))
    assert np.all(np.isnan(report.rel_residual[bad]))
    good = np.setdiff1d(np.arange(S.m1), bad)
    assert np.all(np.isfinite(report.rel_residual[good]))
    assert X.column(bad[0]) is None
    assert np.isfinite(report.summary()["max_rel_residual"])


def test_empty_csv_is_header_only(tmp_path):
    path = export_csv([], tmp_path / "empty.csv")
    assert path.read_text() == ",".join(CSV_HEADER) + "\n"


def test_csv_round_trip_and_order(tmp_path, rng):
    rows = [(i, float(rng.uniform(1, 2)), i // 3, float(rng.uniform(0, 1e-3)), m)
            for i in range(7) for m in ("baseline", ALGORITHM1)]
    path = export_csv(list(reversed(rows)), tmp_path / "r.csv")
    back = read_csv(path)
    assert back == sorted(rows, key=lambda r: (r[0], r[4]))


def test_csv_unwritable_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        export_csv([], tmp_path / "missing" / "r.csv")


def test_csv_is_byte_stable(default_run, tmp_path):
    _, report = default_run
    a = export_csv(report.rows(), tmp_path / "a.csv").read_bytes()
    b = export_csv(report.rows(), tmp_path / "b.csv").read_bytes()
    assert a == b and a.count(b"\n") == 201


def test_summary_json(default_run, tmp_path):
    import json

    _, report = default_run
    data = json.loads(write_summary(report.summary(), tmp_path / "s.json").read_text())
    assert data["total_newton_steps"] == report.total_newton_steps
    assert len(data["subsets"]) == 8


def test_singular_values_homogeneous_are_zero(tmp_path):
    P = build_problem(ModelConfig(nf=10, ns=10, v_in=0.0))
    S = ParameterSet.uniform(1.0, 2.0, 6)
    sig = export_singular_values(P, S, split(S, 2), tmp_path / "sv.csv")
    assert all(np.all(s == 0) for s in sig)


def test_singular_values_singleton(small_problem, tmp_path):
    S = ParameterSet.uniform(20000, 60000, 5)
    path = tmp_path / "sv.csv"
    sig = export_singular_values(small_problem, S, split(S, 5), path)
    assert all(np.count_nonzero(s) <= 1 for s in sig)
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["j"] == "1" and len(rows) == 5


def test_singular_values_default_decay(default_problem, default_params, default_partition, tmp_path):
    sig = export_singular_values(default_problem, default_params, default_partition, tmp_path / "sv.csv")
    for s in sig:
        assert s[9] / s[0] <= 1e-4


def test_singular_values_refuse_large(small_problem, tmp_path):
    S = ParameterSet.uniform(1.0, 2.0, 4)
    with pytest.raises(ValueError, match="dense threshold"):
        export_singular_values(small_problem, S, split(S, 2), tmp_path / "sv.csv", dense_threshold=10)


def test_spectrum_table(small_problem, small_cfg):
    rows = spectrum_table(small_problem, small_cfg.parameters(), 3)
    assert [r[0] for r in rows] == [0, 1, 2]
    assert all(0 <= c < d for _, d, c in rows)
