"""End-to-end runs: the subset low-rank method, the Newton baseline, and reports."""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg

from .linalg import DENSE_THRESHOLD
from .matrixeq import (
    ChebyshevConfig,
    build_rhs,
    direct_solve,
    estimate_spectrum,
    mean_preconditioner,
    subset_newton_step,
    subset_operator,
)
from .newton import NewtonConfig, baseline_sweep, newton_solve, total_steps
from .partition import split, subset_diag

log = logging.getLogger(__name__)

CSV_HEADER = ("index", "mu", "subset", "rel_residual", "method")
ALGORITHM1 = "algorithm1"
BASELINE = "baseline"


@dataclass
class BlockApproximation:
    """Column blocks ``x_med 1^T + S_hat`` per subset; ``None`` marks a failed subset."""

    partition: object
    blocks: list

    @property
    def m1(self):
        return self.partition.parent.m1

    @property
    def rank(self):
        return sum(b.rank for b in self.blocks if b is not None)

    def column(self, i):
        k, j = self.partition.subset_of(i)
        block = self.blocks[k]
        if block is None:
            return None
        return block.column(j)

    def to_dense(self):
        cols = []
        for k, block in enumerate(self.blocks):
            if block is None:
                n = next(b.x_med.size for b in self.blocks if b is not None)
                cols.append(np.full((n, self.partition.size(k)), np.nan))
            else:
                cols.append(block.to_dense())
        return np.hstack(cols)


@dataclass
class SubsetRecord:
    k: int
    mu_median: float
    size: int
    newton_iterations: int = 0
    newton_residual: float = float("nan")
    cheb_iterations: int = 0
    cheb_residual: float = float("nan")
    d: float = float("nan")
    c: float = float("nan")
    rank: int = 0
    matrix_steps: int = 0
    time_newton: float = 0.0
    time_spectrum: float = 0.0
    time_chebyshev: float = 0.0
    error: Optional[str] = None


@dataclass
class RunReport:
    mu: np.ndarray
    rel_residual: np.ndarray
    subset: np.ndarray
    subsets: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def total_newton_steps(self):
        return sum(s.newton_iterations + s.matrix_steps for s in self.subsets)

    @property
    def failed_subsets(self):
        return [s.k for s in self.subsets if s.error is not None]

    def rows(self, method=ALGORITHM1):
        return [
            (i, float(self.mu[i]), int(self.subset[i]), float(self.rel_residual[i]), method)
            for i in range(self.mu.size)
        ]

    def summary(self):
        return {
            "total_newton_steps": self.total_newton_steps,
            "median_newton_steps": sum(s.newton_iterations for s in self.subsets),
            "matrix_equation_steps": sum(s.matrix_steps for s in self.subsets),
            "wall_time": self.wall_time,
            "phase_times": {
                "median_newton": sum(s.time_newton for s in self.subsets),
                "spectrum": sum(s.time_spectrum for s in self.subsets),
                "chebyshev": sum(s.time_chebyshev for s in self.subsets),
            },
            "max_rel_residual": _nanmax(self.rel_residual),
            "failed_subsets": self.failed_subsets,
            "subsets": [asdict(s) for s in self.subsets],
        }


def _nanmax(a):
    a = np.asarray(a, dtype=float)
    return float(np.nanmax(a)) if np.any(np.isfinite(a)) else float("nan")


def _run_subset(P, partition, k, newton_cfg, cheb):
    rec = SubsetRecord(k, partition.median_value(k), partition.size(k))
    t0 = time.perf_counter()
    try:
        med = newton_solve(P, rec.mu_median, newton_cfg)
        rec.time_newton = time.perf_counter() - t0
        rec.newton_iterations = med.iterations
        rec.newton_residual = med.rel_residual
        if not med.converged:
            rec.error = f"median Newton did not reach {newton_cfg.tol:g}"
            return None, rec
        step = subset_newton_step(P, partition, k, med.x, cheb)
    except ArithmeticError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        log.error("subset %d failed: %s", k, rec.error)
        return None, rec
    rec.matrix_steps = 1
    rec.cheb_iterations = step.iterations
    rec.cheb_residual = step.residual
    rec.d, rec.c = step.d, step.c
    rec.rank = step.rank
    rec.time_spectrum = step.timings.get("spectrum", 0.0)
    rec.time_chebyshev = step.timings.get("chebyshev", 0.0)
    return step, rec


def run_algorithm1(P, S, K, eps_N=1e-4, R=10, cheb=None, workers=1, newton_max_iter=50):
    """Split, Newton at each upper median, one low-rank matrix Newton step per subset.

    ``R`` is the rank budget per subset: the correction is limited to rank
    ``R - 1`` on top of the rank-one start. ``cheb`` supplies the remaining
    Chebyshev settings; its ``max_rank`` is overridden. Failed subsets are
    left as ``None`` blocks with ``nan`` residuals.
    """
    if R < 1:
        raise ValueError("rank budget R must be at least 1")
    t_start = time.perf_counter()
    partition = split(S, K)
    newton_cfg = NewtonConfig(tol=eps_N, max_iter=newton_max_iter)
    cheb = ChebyshevConfig(**{**(cheb or ChebyshevConfig()).__dict__, "max_rank": R - 1})

    def job(k):
        return _run_subset(P, partition, k, newton_cfg, cheb)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, range(partition.K)))
    else:
        outcomes = [job(k) for k in range(partition.K)]

    blocks = [step for step, _ in outcomes]
    X = BlockApproximation(partition, blocks)
    subset_ids = np.concatenate(
        [np.full(partition.size(k), k, dtype=int) for k in range(partition.K)]
    )
    report = RunReport(
        mu=np.array(S.values),
        rel_residual=evaluate(P, X, S),
        subset=subset_ids,
        subsets=[rec for _, rec in outcomes],
    )
    report.wall_time = time.perf_counter() - t_start
    return X, report


def evaluate(P, X, S):
    """Relative residual ``||g(x_i, mu_i)|| / ||g(b_D, mu_i)||`` for every column."""
    out = np.full(S.m1, np.nan)
    for i, mu in enumerate(S.values):
        x = X.column(i)
        if x is not None:
            out[i] = P.relative_residual(x, mu)
    return out


@dataclass
class ComparisonReport:
    rows: list
    algorithm1: RunReport
    baseline: list
    baseline_time: float

    @property
    def baseline_steps(self):
        return total_steps(self.baseline)

    def summary(self):
        res = [r.rel_residual for r in self.baseline]
        return {
            "algorithm1": self.algorithm1.summary(),
            "baseline": {
                "total_newton_steps": self.baseline_steps,
                "wall_time": self.baseline_time,
                "max_rel_residual": _nanmax(res),
                "failed": [i for i, r in enumerate(self.baseline) if not r.converged],
            },
            "step_ratio": self.baseline_steps / max(self.algorithm1.total_newton_steps, 1),
        }


def baseline_rows(S, results):
    return [
        (i, float(mu), -1, float(r.rel_residual), BASELINE)
        for i, (mu, r) in enumerate(zip(S.values, results))
    ]


def compare(P, S, newton_cfg, K, eps_N=1e-4, R=10, cheb=None, workers=1, warm_start=True):
    """Baseline sweep and the subset method on the same parameters."""
    t0 = time.perf_counter()
    base = baseline_sweep(P, S, newton_cfg, warm_start=warm_start)
    t_base = time.perf_counter() - t0
    _, report = run_algorithm1(P, S, K, eps_N, R, cheb, workers, newton_cfg.max_iter)
    rows = report.rows(ALGORITHM1) + baseline_rows(S, base)
    return ComparisonReport(rows, report, base, t_base)


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def export_csv(rows, path):
    """Write ``index,mu,subset,rel_residual,method`` rows sorted by index, then method."""
    path = Path(path)
    ordered = sorted(rows, key=lambda r: (r[0], r[4]))
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in ordered:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        return [
            (int(r["index"]), float(r["mu"]), int(r["subset"]), float(r["rel_residual"]), r["method"])
            for r in reader
        ]


def write_summary(summary, path):
    path = Path(path)
    try:
        path.write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def exact_subset_updates(P, S, partition, eps_N=1e-4, max_iter=50):
    """Direct (untruncated) solutions ``S_k`` of every subset's matrix equation.

    Returns a list of ``(x_med, S_k)`` pairs.
    """
    out = []
    for k in range(partition.K):
        med = newton_solve(P, partition.median_value(k), NewtonConfig(eps_N, max_iter))
        shifts, v = subset_diag(partition, k, P.mu_ref)
        op = subset_operator(P, med.x, shifts)
        out.append((med.x, direct_solve(op, build_rhs(P, med.x, v))))
    return out


def export_singular_values(P, S, partition, path, eps_N=1e-4, dense_threshold=DENSE_THRESHOLD):
    """Singular values of each exact ``S_k`` as ``subset,j,sigma`` (``j`` from 1)."""
    if P.n_dof > dense_threshold:
        raise ValueError(
            f"N={P.n_dof} exceeds the dense threshold {dense_threshold}; refusing to form S_k"
        )
    sigmas = [scipy.linalg.svdvals(Sk) for _, Sk in exact_subset_updates(P, S, partition, eps_N)]
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(("subset", "j", "sigma"))
            for k, sv in enumerate(sigmas):
                for j, s in enumerate(sv, start=1):
                    writer.writerow((k, j, _fmt(float(s))))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return sigmas


def spectrum_table(P, S, K, eps_N=1e-4, cheb=None):
    """``(k, d, c)`` for every subset, from the median linearisation."""
    cheb = cheb or ChebyshevConfig()
    partition = split(S, K)
    rows = []
    for k in range(partition.K):
        med = newton_solve(P, partition.median_value(k), NewtonConfig(eps_N))
        shifts, _ = subset_diag(partition, k, P.mu_ref)
        op = subset_operator(P, med.x, shifts)
        pf = mean_preconditioner(op, cheb.anchor)
        d, c = estimate_spectrum(op, pf, cheb.safety, seed=cheb.seed)
        rows.append((k, d, c))
    return rows
