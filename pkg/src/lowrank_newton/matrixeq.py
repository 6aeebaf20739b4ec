"""One Newton step for a whole parameter subset, solved as a matrix equation.

On a subset with shifts ``D = diag(mu_i - mu_ref)`` and a fixed linearisation
point ``x_med`` the Newton updates of all columns satisfy

    A0 S + A1 S D + rho_f A_conv(x_med) S = B,
    B = -g(x_med, 0) 1^T - (A1 x_med) v^T,

whose right-hand side has rank at most two. ``S`` is approximated at low rank
with a preconditioned Chebyshev semi-iteration that truncates its iterates.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import (
    DENSE_THRESHOLD,
    Factorization,
    LowRankFactors,
    dense_eigs,
    fro_norm,
    lincomb,
    lr_add,
    truncate,
)
from .partition import subset_diag

log = logging.getLogger(__name__)


class IndefinitePencil(ArithmeticError):
    """The estimated spectrum does not fit a real interval ``[d - c, d + c]`` with ``0 < d - c``."""


class Diverged(ArithmeticError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True, eq=False)
class SylvesterOperator:
    """``S -> A0 S + A1 S diag(shifts) + rho_f A_conv S``."""

    A0: object
    A1: object
    A_conv: object
    rho_f: float
    shifts: np.ndarray

    def __post_init__(self):
        shifts = np.array(self.shifts, dtype=float).ravel()
        if shifts.size == 0:
            raise ValueError("operator needs at least one shift")
        object.__setattr__(self, "shifts", shifts)
        object.__setattr__(self, "_base", lincomb((1.0, self.A0), (self.rho_f, self.A_conv)))

    @property
    def n(self):
        return self.A0.n_rows

    @property
    def m(self):
        return self.shifts.size

    def system_matrix(self, shift):
        """``A0 + shift * A1 + rho_f * A_conv`` as one sparse matrix."""
        return lincomb((1.0, self._base), (shift, self.A1))

    def apply(self, S):
        if S.shape != (self.n, self.m):
            raise ValueError(f"operand has shape {S.shape}, expected {(self.n, self.m)}")
        return LowRankFactors(
            np.hstack([self._base @ S.U, self.A1 @ S.U]),
            np.hstack([S.V, self.shifts[:, None] * S.V]),
        )

    def apply_dense(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n, self.m):
            raise ValueError(f"operand has shape {X.shape}, expected {(self.n, self.m)}")
        return self._base @ X + (self.A1 @ X) * self.shifts


def subset_operator(P, x_med, shifts):
    return SylvesterOperator(P.A0, P.A1, P.assemble_conv(x_med), P.rho_f, shifts)


def build_rhs(P, x_med, v):
    """Rank <= 2 right-hand side whose column ``i`` is ``-g(x_med, v[i])``.

    Identically zero factor columns are dropped, so the rank reported is the
    number of nonzero terms.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("empty parameter subset")
    g0 = P.residual(x_med, 0.0)
    a1x = P.A1 @ np.asarray(x_med, dtype=float)
    cols_u, cols_v = [], []
    if np.any(g0):
        cols_u.append(-g0)
        cols_v.append(np.ones_like(v))
    if np.any(a1x):
        cols_u.append(-a1x)
        cols_v.append(v)
    if not cols_u:
        return LowRankFactors.zeros(P.n_dof, v.size)
    return LowRankFactors(np.column_stack(cols_u), np.column_stack(cols_v))


class MeanPreconditioner(Factorization):
    """LU of the subset system matrix at one anchor shift."""

    def __init__(self, op, shift):
        self.shift = float(shift)
        super().__init__(op.system_matrix(self.shift))


def mean_preconditioner(op, anchor="mean"):
    if anchor == "mean":
        shift = float(np.mean(op.shifts))
    elif anchor == "median":
        shift = float(op.shifts[op.m // 2])
    else:
        raise ValueError(f"unknown preconditioner anchor {anchor!r}")
    return MeanPreconditioner(op, shift)


def arnoldi_ritz(matvec, n, k=30, seed=42):
    """Ritz values from a ``k``-step Arnoldi process started at a seeded random vector."""
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    if not np.any(q):
        q = np.ones(n)
    k = min(k, n)
    Q = np.zeros((n, k + 1))
    H = np.zeros((k + 1, k))
    Q[:, 0] = q / np.linalg.norm(q)
    for j in range(k):
        w = matvec(Q[:, j])
        for _ in range(2):  # classical Gram-Schmidt, twice
            h = Q[:, : j + 1].T @ w
            w -= Q[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] <= 1e-14 * np.linalg.norm(H[: j + 2, j]):
            k = j + 1
            break
        Q[:, j + 1] = w / H[j + 1, j]
    return dense_eigs(H[:k, :k])


def _preconditioned_eigs(op, pfact, shift, dense_threshold, krylov_dim, seed):
    if op.n <= dense_threshold:
        M = pfact.solve_multi(op.system_matrix(shift).to_dense())
        return dense_eigs(M, threshold=dense_threshold)
    A = op.system_matrix(shift)
    return arnoldi_ritz(lambda x: pfact.solve(A @ x), op.n, krylov_dim, seed)


def estimate_spectrum(op, pfact, safety=1.1, dense_threshold=DENSE_THRESHOLD,
                      krylov_dim=30, seed=42):
    """Chebyshev interval ``(d, c)`` from the extreme-parameter preconditioned matrices.

    Only real parts of the eigenvalues are used; ``c`` is widened by
    ``safety``. With a :class:`MeanPreconditioner` the identity
    ``P^-1 A(shift) = I + (shift - anchor) P^-1 A1`` is used, so a subset whose
    shifts all equal the anchor gets ``(1, 0)`` exactly.
    """
    if safety < 1:
        raise ValueError("safety factor must be >= 1")
    lo_shift, hi_shift = float(op.shifts.min()), float(op.shifts.max())
    anchor = getattr(pfact, "shift", None)
    if anchor is not None:
        deltas = {lo_shift - anchor, hi_shift - anchor}
        if deltas == {0.0}:
            return 1.0, 0.0
        if op.n <= dense_threshold:
            theta = dense_eigs(pfact.solve_multi(op.A1.to_dense()), threshold=dense_threshold)
        else:
            theta = arnoldi_ritz(lambda x: pfact.solve(op.A1 @ x), op.n, krylov_dim, seed)
        re = np.concatenate([1.0 + delta * theta.real for delta in sorted(deltas)])
    else:
        re = np.concatenate([
            _preconditioned_eigs(op, pfact, s, dense_threshold, krylov_dim, seed).real
            for s in (lo_shift, hi_shift)
        ])
    lam_lo, lam_hi = float(re.min()), float(re.max())
    if lam_lo <= 0:
        raise IndefinitePencil(f"preconditioned spectrum reaches {lam_lo:.3e} <= 0")
    d = 0.5 * (lam_hi + lam_lo)
    c = safety * 0.5 * (lam_hi - lam_lo)
    if c >= d:
        raise IndefinitePencil(f"widened interval [{d - c:.3e}, {d + c:.3e}] contains 0")
    return d, c


@dataclass
class ChebyshevConfig:
    """Settings of the low-rank Chebyshev solve.

    ``d``/``c`` left as ``None`` are estimated per subset.
    """

    d: Optional[float] = None
    c: Optional[float] = None
    max_rank: int = 9
    trunc_tol: float = 1e-14
    max_iter: int = 100
    residual_tol: float = 1e-9
    safety: float = 1.1
    anchor: str = "mean"
    seed: int = 42

    def __post_init__(self):
        if self.max_rank < 0:
            raise ValueError("max_rank must be non-negative")
        if self.d is not None and self.c is not None and not 0 <= self.c < self.d:
            raise ValueError("need 0 <= c < d")


@dataclass
class SubsetSolveResult:
    S_hat: LowRankFactors
    iterations: int
    residual: float
    d: float
    c: float
    history: list = field(default_factory=list)
    converged: bool = True


def _envelope(sigma, j):
    """``1 / T_j(sigma)``: worst-case residual reduction on the interval."""
    if sigma is None or j == 0:
        return 1.0 if j == 0 else 0.0
    with np.errstate(over="ignore"):
        return 1.0 / np.cosh(j * np.arccosh(sigma))


def chebyshev_solve(op, pfact, B, cfg, callback=None):
    """Preconditioned Chebyshev semi-iteration on truncated low-rank iterates.

    The preconditioned residual ``P^-1 (B - op(S))`` is recomputed from the
    current iterate at every step. The run counts as diverged once that
    residual exceeds ten times both its running minimum and the Chebyshev
    envelope ``1 / T_j(d / c)``; a clustered spectrum makes the residual
    oscillate up to the envelope without anything being wrong. ``callback(j, S)`` is called after update
    ``j``.
    """
    d, c = cfg.d, cfg.c
    if d is None or c is None or not 0 <= c < d:
        raise ValueError(f"invalid Chebyshev interval d={d}, c={c}")
    n, m = op.n, op.m
    if B.shape != (n, m):
        raise ValueError(f"right-hand side has shape {B.shape}, expected {(n, m)}")

    def precondition(X):
        return LowRankFactors(pfact.solve_multi(X.U), X.V)

    ref = fro_norm(precondition(B))
    S = LowRankFactors.zeros(n, m)
    if ref == 0.0 or cfg.max_rank == 0:
        return SubsetSolveResult(S, 0, 0.0 if ref == 0.0 else 1.0, d, c, [], ref == 0.0)

    def trunc(X):
        return truncate(X, cfg.max_rank, cfg.trunc_tol)

    sigma = d / c if c > 0 else None
    history = []
    dS, rho = None, None
    j = 0
    while True:
        Z = precondition(lr_add(B, -op.apply(S)))
        rel = fro_norm(Z) / ref
        history.append(rel)
        if rel <= cfg.residual_tol or j >= cfg.max_iter:
            break
        if rel > 10 * max(min(history), _envelope(sigma, j)):
            raise Diverged(f"Chebyshev residual grew to {rel:.3e} at iteration {j}", history)
        Z = trunc(Z)
        if j == 0 or sigma is None:
            dS = Z.scaled(1.0 / d)
            rho = 1.0 / sigma if sigma is not None else None
        else:
            rho_new = 1.0 / (2.0 * sigma - rho)
            dS = trunc(lr_add(dS.scaled(rho_new * rho), Z.scaled(2.0 * rho_new / c)))
            rho = rho_new
        S = trunc(lr_add(S, dS))
        j += 1
        if callback is not None:
            callback(j, S)
    converged = history[-1] <= cfg.residual_tol
    if not converged:
        log.warning("Chebyshev stopped at %.2e after %d iterations", history[-1], j)
    return SubsetSolveResult(S, j, history[-1], d, c, history, converged)


def direct_solve(op, B):
    """Column-by-column direct solve of the matrix equation (dense result)."""
    Bd = B.to_dense() if isinstance(B, LowRankFactors) else np.asarray(B, dtype=float)
    out = np.zeros((op.n, op.m))
    for i, shift in enumerate(op.shifts):
        if np.any(Bd[:, i]):
            out[:, i] = Factorization(op.system_matrix(shift)).solve(Bd[:, i])
    return out


@dataclass
class SubsetStep:
    """``X_hat_k = x_med 1^T + S_hat`` together with solver diagnostics."""

    k: int
    x_med: np.ndarray
    S_hat: LowRankFactors
    d: float = float("nan")
    c: float = float("nan")
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    timings: dict = field(default_factory=dict)

    @property
    def rank(self):
        return (1 if np.any(self.x_med) else 0) + self.S_hat.rank

    def column(self, j):
        return self.x_med + self.S_hat.column(j)

    def to_dense(self):
        return self.x_med[:, None] + self.S_hat.to_dense()


def subset_newton_step(P, partition, k, x_med, cfg=None):
    """One Newton step for all parameters of subset ``k`` from the common start ``x_med``."""
    cfg = cfg or ChebyshevConfig()
    x_med = np.asarray(x_med, dtype=float)
    if not np.all(np.isfinite(x_med)):
        raise ValueError("x_med must be finite")
    timings = {}
    shifts, v = subset_diag(partition, k, P.mu_ref)
    op = subset_operator(P, x_med, shifts)
    B = build_rhs(P, x_med, v)
    if B.rank == 0 or cfg.max_rank == 0:
        return SubsetStep(k, x_med, LowRankFactors.zeros(P.n_dof, v.size), timings=timings)

    t0 = time.perf_counter()
    pfact = mean_preconditioner(op, cfg.anchor)
    if cfg.d is None or cfg.c is None:
        d, c = estimate_spectrum(op, pfact, cfg.safety, seed=cfg.seed)
    else:
        d, c = cfg.d, cfg.c
    t1 = time.perf_counter()
    run_cfg = ChebyshevConfig(**{**cfg.__dict__, "d": d, "c": c})
    res = chebyshev_solve(op, pfact, B, run_cfg)
    t2 = time.perf_counter()
    timings.update(spectrum=t1 - t0, chebyshev=t2 - t1)
    return SubsetStep(k, x_med, res.S_hat, d, c, res.iterations, res.residual,
                      res.converged, timings)
