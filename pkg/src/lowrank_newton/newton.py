"""Plain Newton iteration for one parameter value, and consecutive sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .linalg import SingularMatrix, factorize
from .problem import NonFinite

log = logging.getLogger(__name__)


@dataclass
class NewtonConfig:
    """Stopping rule and start vector for :func:`newton_solve`.

    ``initial`` is ``"dirichlet"`` (start from ``b_D``), ``"zero"``, or an
    explicit start vector.
    """

    tol: float = 1e-4
    max_iter: int = 50
    initial: Union[str, np.ndarray] = "dirichlet"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if isinstance(self.initial, str) and self.initial not in ("dirichlet", "zero"):
            raise ValueError(f"unknown initial guess policy {self.initial!r}")


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    mu: float = float("nan")
    error: Optional[str] = None

    @property
    def rel_residual(self):
        return self.residual_history[-1] if self.residual_history else float("nan")


def _start_vector(P, initial):
    if isinstance(initial, str):
        return P.b_D.copy() if initial == "dirichlet" else np.zeros(P.n_dof)
    x0 = np.array(initial, dtype=float)
    if x0.shape != (P.n_dof,):
        raise ValueError(f"start vector has shape {x0.shape}, expected ({P.n_dof},)")
    return x0


def newton_solve(P, mu, cfg=None, x0=None):
    """Solve ``g(x, mu) = 0`` by undamped Newton steps with direct solves.

    Convergence is judged on ``||g(x, mu)|| / ||g(b_D, mu)||``. ``x0``
    overrides the start vector chosen by ``cfg.initial``.

    Raises
    ------
    SingularMatrix
        If a Jacobian cannot be factorized.
    NonFinite
        If an iterate picks up inf/nan entries.
    """
    cfg = cfg or NewtonConfig()
    x = _start_vector(P, cfg.initial if x0 is None else x0)
    ref = P.residual_reference(mu)
    scale = ref if ref > 0 else 1.0

    r = P.residual(x, mu)
    history = [float(np.linalg.norm(r)) / scale]
    j = 0
    while history[-1] > cfg.tol and j < cfg.max_iter:
        s = factorize(P.jacobian(x, mu)).solve(-r)
        x = x + s
        j += 1
        if not np.all(np.isfinite(x)):
            raise NonFinite(f"Newton iterate {j} is not finite (mu={mu})")
        r = P.residual(x, mu)
        history.append(float(np.linalg.norm(r)) / scale)
    converged = history[-1] <= cfg.tol
    if not converged:
        log.warning("Newton did not reach %.1e at mu=%g after %d steps", cfg.tol, mu, j)
    return NewtonResult(x, j, history, converged, float(mu))


def baseline_sweep(P, S, cfg=None, warm_start=True):
    """Newton solves for every parameter in ascending order.

    With ``warm_start`` each solve starts from the previous solution.
    Failures are stored in the result's ``error`` field and the sweep moves on.
    """
    cfg = cfg or NewtonConfig()
    results = []
    prev = None
    for mu in S.values:
        try:
            res = newton_solve(P, mu, cfg, x0=prev if warm_start else None)
        except (SingularMatrix, NonFinite) as exc:
            log.error("baseline failed at mu=%g: %s", mu, exc)
            res = NewtonResult(np.full(P.n_dof, np.nan), 0, [], False, float(mu), str(exc))
        results.append(res)
        if warm_start and res.error is None and res.converged:
            prev = res.x
    return results


def total_steps(results):
    return sum(r.iterations for r in results)


def convergence_order(history):
    """Observed order ``log(r[j+1]/r[j]) / log(r[j]/r[j-1])`` for consecutive triples."""
    h = np.log(np.asarray(history, dtype=float))
    steps = np.diff(h)
    return steps[1:] / steps[:-1]
