"""Splitting a sorted parameter set into contiguous subsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidPartition(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParameterSet:
    """Strictly increasing parameter values (shear moduli)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("parameter set must not be empty")
        if not np.all(np.isfinite(v)):
            raise ValueError("parameter values must be finite")
        if np.any(np.diff(v) <= 0):
            raise ValueError("parameter values must be strictly increasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, lo, hi, count):
        """``count`` equispaced values including both endpoints."""
        if count < 1:
            raise ValueError("count must be positive")
        if count > 1 and not hi > lo:
            raise ValueError(f"degenerate parameter interval [{lo}, {hi}]")
        return cls(np.linspace(lo, hi, count))

    def __len__(self):
        return self.values.size

    @property
    def m1(self):
        return self.values.size


def upper_median_index(n):
    """1-based position of the upper median in a sorted list of length ``n``."""
    if n < 1:
        raise ValueError("upper median of an empty set")
    return n // 2 + 1


@dataclass(frozen=True, eq=False)
class ParameterPartition:
    parent: ParameterSet
    boundaries: tuple

    @property
    def K(self):
        return len(self.boundaries) - 1

    def _check(self, k):
        if not 0 <= k < self.K:
            raise IndexError(f"subset index {k} out of range for K={self.K}")

    def indices(self, k):
        """Global (0-based) parameter indices of subset ``k``."""
        self._check(k)
        return range(self.boundaries[k], self.boundaries[k + 1])

    def size(self, k):
        return len(self.indices(k))

    def sizes(self):
        return [self.size(k) for k in range(self.K)]

    def values(self, k):
        self._check(k)
        return self.parent.values[self.boundaries[k]:self.boundaries[k + 1]]

    def median_local_index(self, k):
        """1-based position of the upper median inside subset ``k``."""
        return upper_median_index(self.size(k))

    def median_index(self, k):
        """Global 0-based index of the upper-median parameter of subset ``k``."""
        return self.boundaries[k] + self.median_local_index(k) - 1

    def median_value(self, k):
        return float(self.parent.values[self.median_index(k)])

    def subset_of(self, i):
        """Subset id and local 0-based position of global index ``i``."""
        if not 0 <= i < self.parent.m1:
            raise IndexError(f"parameter index {i} out of range")
        k = int(np.searchsorted(self.boundaries, i, side="right")) - 1
        return k, i - self.boundaries[k]


def split(S, K):
    """Balanced contiguous split; the first ``m1 % K`` subsets get one extra element."""
    m1 = S.m1
    if not 1 <= K <= m1:
        raise InvalidPartition(f"need 1 <= K <= {m1}, got K={K}")
    base, extra = divmod(m1, K)
    sizes = [base + 1 if k < extra else base for k in range(K)]
    return ParameterPartition(S, tuple(int(b) for b in np.concatenate([[0], np.cumsum(sizes)])))


def subset_diag(P, k, mu_ref=0.0):
    """Shifts ``mu_i - mu_ref`` and raw values ``mu_i`` of subset ``k``."""
    v = np.array(P.values(k), dtype=float)
    return v - mu_ref, v
