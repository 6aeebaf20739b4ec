"""Sparse and low-rank linear algebra kernels.

Dense blocks are plain ``numpy`` arrays. Sparse matrices are stored in a small
immutable CSR container that converts to :mod:`scipy.sparse` for products.
Direct solves go through LAPACK's banded LU with partial pivoting
(``dgbtrf``/``dgbtrs``) when the bandwidth is small, and SuperLU otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

#: Largest order for which dense eigenvalue computations are allowed.
DENSE_THRESHOLD = 2000

# Banded storage costs (2*kl + ku + 1) * n doubles; above this SuperLU is used.
_MAX_BAND_STORAGE = 20_000_000


class SingularMatrix(ArithmeticError):
    """Raised when a factorization meets an exactly zero pivot."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        if message is None:
            message = f"matrix is singular (zero pivot at index {pivot})"
        super().__init__(message)


class EigenvalueError(ArithmeticError):
    pass


def _check_vector(x, n, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"{name} has shape {x.shape}, expected ({n},)")
    return x


@dataclass(frozen=True, eq=False)
class SparseMatrix:
    """Compressed sparse row matrix in canonical form.

    Column indices are strictly increasing within every row. Instances are
    immutable; arithmetic returns new matrices.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        if offsets.shape != (self.n_rows + 1,):
            raise ValueError("row_offsets must have length n_rows + 1")
        if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing")
        if offsets[-1] != cols.size or cols.size != vals.size:
            raise ValueError("row_offsets, col_indices and values disagree in length")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_cols):
            raise ValueError("column index out of range")
        if cols.size > 1:
            within_row = np.ones(cols.size - 1, dtype=bool)
            starts = offsets[1:-1]
            within_row[starts[(starts > 0) & (starts < cols.size)] - 1] = False
            if np.any(np.diff(cols)[within_row] <= 0):
                raise ValueError("rows are not in canonical (sorted, unique) form")
        for arr in (offsets, cols, vals):
            arr.setflags(write=False)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_scipy(cls, A):
        A = sp.csr_matrix(A, dtype=float, copy=True)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.shape[0], A.shape[1], A.indptr, A.indices, A.data)

    @classmethod
    def from_dense(cls, A):
        return cls.from_scipy(sp.csr_matrix(np.asarray(A, dtype=float)))

    @classmethod
    def identity(cls, n):
        return cls.from_scipy(sp.identity(n, format="csr"))

    @classmethod
    def zeros(cls, n_rows, n_cols=None):
        n_cols = n_rows if n_cols is None else n_cols
        return cls.from_scipy(sp.csr_matrix((n_rows, n_cols)))

    @classmethod
    def diag(cls, d):
        return cls.from_scipy(sp.diags(np.asarray(d, dtype=float), format="csr"))

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.values.size)

    def to_scipy(self):
        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    def to_dense(self):
        return self.to_scipy().toarray()

    def __matmul__(self, other):
        other = np.asarray(other, dtype=float)
        if other.ndim == 1:
            return spmv(self, other)
        if other.shape[0] != self.n_cols:
            raise ValueError(f"cannot multiply {self.shape} by {other.shape}")
        return self.to_scipy() @ other

    def __add__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return SparseMatrix.from_scipy(self.to_scipy() + other.to_scipy())

    def __mul__(self, alpha):
        return SparseMatrix(
            self.n_rows, self.n_cols, self.row_offsets, self.col_indices,
            float(alpha) * self.values,
        )

    __rmul__ = __mul__

    def __sub__(self, other):
        return self + (-1.0) * other

    def bandwidth(self):
        """Return ``(lower, upper)`` bandwidth of the stored pattern."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_offsets))
        if rows.size == 0:
            return 0, 0
        offset = self.col_indices - rows
        return int(max(0, -offset.min())), int(max(0, offset.max()))


def lincomb(*terms):
    """Sum ``alpha * A`` over ``(alpha, A)`` pairs without materialising each term."""
    acc = None
    for alpha, A in terms:
        M = float(alpha) * A.to_scipy()
        acc = M if acc is None else acc + M
    return SparseMatrix.from_scipy(acc)


def spmv(A, x):
    x = _check_vector(x, A.n_cols)
    return A.to_scipy() @ x


class Factorization:
    """LU factors of a square sparse matrix, reusable for many right-hand sides.

    Read-only after construction, so one instance may be shared between
    threads.
    """

    def __init__(self, A):
        if A.n_rows != A.n_cols:
            raise ValueError(f"cannot factorize non-square matrix {A.shape}")
        self.n = A.n_rows
        row_mass = np.asarray(abs(A.to_scipy()).sum(axis=1)).ravel()
        zero_rows = np.flatnonzero(row_mass == 0.0)
        if zero_rows.size:
            i = int(zero_rows[0])
            raise SingularMatrix(i, f"matrix is structurally singular (zero row {i})")
        kl, ku = A.bandwidth()
        self._banded = (2 * kl + ku + 1) * self.n <= _MAX_BAND_STORAGE
        if self._banded:
            self._factor_banded(A, kl, ku)
        else:
            try:
                self._lu = spla.splu(A.to_scipy().tocsc())
            except RuntimeError as exc:
                raise SingularMatrix(None, f"matrix is singular ({exc})") from None

    def _factor_banded(self, A, kl, ku):
        n = self.n
        ab = np.zeros((2 * kl + ku + 1, n))
        rows = np.repeat(np.arange(n), np.diff(A.row_offsets))
        cols = A.col_indices
        ab[kl + ku + rows - cols, cols] = A.values
        lu, ipiv, info = lapack.dgbtrf(ab, kl, ku)
        if info > 0:
            raise SingularMatrix(info - 1)
        if info < 0:
            raise ValueError(f"dgbtrf: illegal argument {-info}")
        self.kl, self.ku = kl, ku
        self._ab, self._ipiv = lu, ipiv

    def _solve_2d(self, B):
        if self._banded:
            X, info = lapack.dgbtrs(self._ab, self.kl, self.ku, B, self._ipiv)
            if info != 0:
                raise ValueError(f"dgbtrs: illegal argument {-info}")
            return X
        return self._lu.solve(B)

    def solve(self, b):
        b = _check_vector(b, self.n, "b")
        return self._solve_2d(b[:, None].copy())[:, 0]

    def solve_multi(self, B):
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != self.n:
            raise ValueError(f"right-hand side has shape {B.shape}, expected ({self.n}, k)")
        if B.shape[1] == 0:
            return np.zeros_like(B)
        return self._solve_2d(np.array(B, order="F"))


def factorize(A):
    return Factorization(A)


def solve(F, b):
    return F.solve(b)


def solve_multi(F, B):
    return F.solve_multi(B)


@dataclass(frozen=True, eq=False)
class LowRankFactors:
    """A matrix stored as ``U @ V.T``."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=float)
        V = np.asarray(self.V, dtype=float)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise ValueError(f"incompatible factor shapes {U.shape}, {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @classmethod
    def zeros(cls, n_rows, n_cols):
        return cls(np.zeros((n_rows, 0)), np.zeros((n_cols, 0)))

    @classmethod
    def from_dense(cls, X):
        X = np.asarray(X, dtype=float)
        return cls(X.copy(), np.eye(X.shape[1]))

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])

    def to_dense(self):
        return self.U @ self.V.T

    def column(self, j):
        return self.U @ self.V[j]

    def scaled(self, alpha):
        return LowRankFactors(alpha * self.U, self.V)

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other):
        return lr_add(self, other)

    def __sub__(self, other):
        return lr_add(self, -other)

    def fro_norm(self):
        return fro_norm(self)


def lr_add(X, Y):
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch {X.shape} vs {Y.shape}")
    return LowRankFactors(np.hstack([X.U, Y.U]), np.hstack([X.V, Y.V]))


def _core(X):
    """Thin QR of both factors; returns ``(Qu, Qv, R_u @ R_v.T)``."""
    Qu, Ru = np.linalg.qr(X.U)
    Qv, Rv = np.linalg.qr(X.V)
    return Qu, Qv, Ru @ Rv.T


def fro_norm(X):
    """Frobenius norm of ``U @ V.T`` without forming the product."""
    if X.rank == 0:
        return 0.0
    if X.rank >= min(X.shape):
        return float(np.linalg.norm(X.to_dense()))
    return float(np.linalg.norm(_core(X)[2]))


def singular_values(X):
    if X.rank == 0:
        return np.zeros(0)
    return scipy.linalg.svdvals(_core(X)[2])


def truncate(X, max_rank, tol=0.0):
    """Recompress ``X`` to at most ``max_rank`` terms.

    Singular values at or below ``tol * sigma_1`` are dropped as well, and so
    are those at the rounding level of the factor product. The returned ``U`` has orthonormal columns and ``V`` carries the singular
    values.
    """
    if max_rank < 1:
        raise ValueError("max_rank must be at least 1")
    if tol < 0:
        raise ValueError("tol must be non-negative")
    n, m = X.shape
    if X.rank == 0:
        return LowRankFactors.zeros(n, m)
    Qu, Qv, core = _core(X)
    W, s, Zt = scipy.linalg.svd(core, full_matrices=False, lapack_driver="gesvd")
    # Rounding level of U @ V.T; anything below is cancellation noise.
    noise = 8 * np.finfo(float).eps * np.linalg.norm(X.U) * np.linalg.norm(X.V)
    r = min(max_rank, int(np.count_nonzero(s > max(tol * s[0], noise))))
    if r == 0:
        return LowRankFactors.zeros(n, m)
    return LowRankFactors(Qu @ W[:, :r], (Qv @ Zt[:r].T) * s[:r])


def dense_eigs(A, threshold=DENSE_THRESHOLD):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] > threshold:
        raise ValueError(f"order {A.shape[0]} exceeds the dense threshold {threshold}")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(str(exc)) from None
