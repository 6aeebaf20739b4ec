"""Parametric nonlinear problems with affine parameter dependence.

A problem provides the residual

    g(x, mu) = A0 x + (mu - mu_ref) A1 x + rho_f N(x) - b_D

where ``N`` is a quadratic convection term acting on the fluid unknowns only,
together with its Jacobian pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, lincomb

MODELS = ("burgers-fsi-1d",)


class NonFinite(ArithmeticError):
    pass


class ParametricProblem:
    """Base class; concrete models implement :meth:`nonlinear` and :meth:`conv_jacobian`.

    ``fluid_dofs`` lists the unknowns the convection term depends on. Rows
    and columns of the convection Jacobian outside that set are zero.
    """

    def __init__(self, A0, A1, b_D, rho_f, nu_f, lambda_s=0.0, mu_ref=0.0, fluid_dofs=None):
        if A0.shape != A1.shape or A0.n_rows != A0.n_cols:
            raise ValueError("A0 and A1 must be square and of equal size")
        self.A0 = A0
        self.A1 = A1
        self.b_D = np.array(b_D, dtype=float)
        self.b_D.setflags(write=False)
        if self.b_D.shape != (A0.n_rows,):
            raise ValueError("b_D does not match the matrix size")
        self.rho_f = float(rho_f)
        self.nu_f = float(nu_f)
        self.lambda_s = float(lambda_s)
        self.mu_ref = float(mu_ref)
        self.fluid_dofs = np.arange(A0.n_rows) if fluid_dofs is None else np.asarray(fluid_dofs)

    @property
    def n_dof(self):
        return self.A0.n_rows

    def nonlinear(self, x):
        raise NotImplementedError

    def conv_jacobian(self, x):
        raise NotImplementedError

    def _state(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_dof,):
            raise ValueError(f"state has shape {x.shape}, expected ({self.n_dof},)")
        if not np.all(np.isfinite(x)):
            raise NonFinite("state contains non-finite entries")
        return x

    def residual(self, x, mu):
        x = self._state(x)
        return (
            self.A0 @ x
            + (mu - self.mu_ref) * (self.A1 @ x)
            + self.rho_f * self.nonlinear(x)
            - self.b_D
        )

    def assemble_conv(self, x):
        return self.conv_jacobian(self._state(x))

    def jacobian(self, x, mu):
        Ac = self.assemble_conv(x)
        return lincomb((1.0, self.A0), (mu - self.mu_ref, self.A1), (self.rho_f, Ac))

    def residual_reference(self, mu):
        """Norm used to make residuals relative: ``||g(b_D, mu)||_2``."""
        return float(np.linalg.norm(self.residual(self.b_D, mu)))

    def relative_residual(self, x, mu, reference=None):
        if reference is None:
            reference = self.residual_reference(mu)
        r = float(np.linalg.norm(self.residual(x, mu)))
        return r / reference if reference > 0 else r


@dataclass
class ModelConfig:
    model: str = "burgers-fsi-1d"
    nf: int = 200
    ns: int = 200
    v_in: float = 1.0
    rho_f: float = 12.5
    nu_f: float = 0.04
    lambda_s: float = 200000.0
    mu_min: float = 20000.0
    mu_max: float = 60000.0
    num_params: int = 200
    mu_values: Optional[Sequence[float]] = field(default=None)

    def validate(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.nf < 2 or self.ns < 2:
            raise ValueError("nf and ns must be at least 2")
        if self.nu_f <= 0 or self.rho_f <= 0:
            raise ValueError("rho_f and nu_f must be positive")
        if self.mu_values is None:
            if self.num_params < 1:
                raise ValueError("num_params must be positive")
            if self.num_params > 1 and not self.mu_max > self.mu_min:
                raise ValueError("parameter interval is degenerate")
        return self

    def parameters(self):
        from .partition import ParameterSet

        if self.mu_values is not None:
            return ParameterSet(np.asarray(self.mu_values, dtype=float))
        return ParameterSet.uniform(self.mu_min, self.mu_max, self.num_params)


class BurgersFSI1D(ParametricProblem):
    """Viscous Burgers flow on (0, 1) coupled to a linear elastic bar on (1, 2).

    Unknowns are ordered as fluid interior nodes, the shared interface node,
    then solid interior nodes. Rows are scaled by the local mesh width, so the
    interface row is the flux balance

        rho_f nu_f (w - v_last) / h_f + mu (w - u_first) / h_s = 0.

    The inflow value enters ``b_D`` through diffusion and ``A0`` through the
    linear part of the convection stencil at the first node, which keeps
    ``N`` homogeneous of degree two.
    """

    def __init__(self, nf, ns, v_in, rho_f, nu_f, lambda_s=0.0):
        self.nf, self.ns, self.v_in = int(nf), int(ns), float(v_in)
        self.h_f, self.h_s = 1.0 / nf, 1.0 / ns
        n_fluid = nf - 1
        N = nf + ns - 1
        self.interface = n_fluid
        A0, A1, b = self._assemble(N, n_fluid, rho_f, nu_f)
        # N(x) only sees velocities: fluid interior plus the interface node.
        super().__init__(A0, A1, b, rho_f, nu_f, lambda_s, 0.0, np.arange(n_fluid + 1))
        self._rows = np.arange(n_fluid)

    def _assemble(self, N, n_fluid, rho_f, nu_f):
        hf, hs = self.h_f, self.h_s
        A0 = sp.lil_matrix((N, N))
        A1 = sp.lil_matrix((N, N))
        b = np.zeros(N)
        kf = rho_f * nu_f / hf
        for i in range(n_fluid):
            A0[i, i] = 2 * kf
            if i > 0:
                A0[i, i - 1] = -kf
            A0[i, i + 1] = -kf  # i + 1 may be the interface node
        b[0] = kf * self.v_in
        A0[0, 0] += -0.5 * rho_f * self.v_in
        w = n_fluid
        A0[w, w] = kf
        A0[w, w - 1] = -kf
        ks = 1.0 / hs
        A1[w, w] = ks
        A1[w, w + 1] = -ks
        for j in range(w + 1, N):
            A1[j, j] = 2 * ks
            A1[j, j - 1] = -ks
            if j + 1 < N:
                A1[j, j + 1] = -ks
        return SparseMatrix.from_scipy(A0), SparseMatrix.from_scipy(A1), b

    def _velocity_neighbours(self, x):
        v = x[: self.interface + 1]
        left = np.concatenate([[0.0], v[:-2]])
        right = v[1:]
        return v[:-1], left, right

    def nonlinear(self, x):
        vi, left, right = self._velocity_neighbours(x)
        out = np.zeros(self.n_dof)
        out[self._rows] = 0.5 * vi * (right - left)
        return out

    def conv_jacobian(self, x):
        vi, left, right = self._velocity_neighbours(x)
        rows, cols, vals = [], [], []
        rows.append(self._rows); cols.append(self._rows); vals.append(0.5 * (right - left))
        rows.append(self._rows); cols.append(self._rows + 1); vals.append(0.5 * vi)
        rows.append(self._rows[1:]); cols.append(self._rows[1:] - 1); vals.append(-0.5 * vi[1:])
        J = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_dof, self.n_dof),
        )
        return SparseMatrix.from_scipy(J)


def build_burgers_fsi_1d(cfg):
    cfg.validate()
    return BurgersFSI1D(cfg.nf, cfg.ns, cfg.v_in, cfg.rho_f, cfg.nu_f, cfg.lambda_s)


def build_problem(cfg):
    if cfg.model == "burgers-fsi-1d":
        return build_burgers_fsi_1d(cfg)
    raise ValueError(f"unknown model {cfg.model!r}")


def poisson_ratio(lambda_s, mu_s):
    denom = 2.0 * (lambda_s + mu_s)
    if not lambda_s + mu_s > 0:
        raise ValueError("lambda_s + mu_s must be positive")
    return lambda_s / denom
