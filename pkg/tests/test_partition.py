import numpy as np
import pytest

from lowrank_newton.partition import (
    InvalidPartition,
    ParameterSet,
    split,
    subset_diag,
    upper_median_index,
)


def test_split_1500_into_15():
    P = split(ParameterSet.uniform(20000, 60000, 1500), 15)
    assert P.sizes() == [100] * 15
    assert P.median_local_index(0) == 51


def test_front_loaded_balancing():
    assert split(ParameterSet(np.arange(5.0)), 2).sizes() == [3, 2]
    assert split(ParameterSet(np.arange(10.0)), 4).sizes() == [3, 3, 2, 2]


def test_singletons_are_their_own_median():
    P = split(ParameterSet([1.0, 2.0, 3.0]), 3)
    assert [P.median_index(k) for k in range(3)] == [0, 1, 2]


@pytest.mark.parametrize("K", [0, 6])
def test_invalid_K(K):
    with pytest.raises(InvalidPartition):
        split(ParameterSet(np.arange(5.0)), K)


@pytest.mark.parametrize("n,expected", [(100, 51), (5, 3), (1, 1), (2, 2)])
def test_upper_median_index(n, expected):
    assert upper_median_index(n) == expected


def test_upper_median_of_empty():
    with pytest.raises(ValueError):
        upper_median_index(0)


def test_subset_diag():
    P = split(ParameterSet([2.0, 4.0, 6.0]), 1)
    D, v = subset_diag(P, 0, 0.0)
    np.testing.assert_array_equal(D, [2, 4, 6])
    np.testing.assert_array_equal(v, [2, 4, 6])
    D, _ = subset_diag(P, 0, 4.0)
    np.testing.assert_array_equal(D, [-2, 0, 2])
    with pytest.raises(IndexError):
        subset_diag(P, 1)


def test_subset_diag_on_wide_interval():
    S = ParameterSet.uniform(20000, 60000, 1500)
    P = split(S, 15)
    mu_ref = 30000.0
    D, v = subset_diag(P, 3, mu_ref)
    np.testing.assert_array_equal(v, S.values[300:400])
    np.testing.assert_array_equal(D, S.values[300:400] - mu_ref)


def test_uniform_grid_includes_endpoints():
    S = ParameterSet.uniform(20000, 60000, 200)
    assert S.values[0] == 20000 and S.values[-1] == 60000
    np.testing.assert_allclose(np.diff(S.values), 40000 / 199)


def test_parameter_set_must_increase():
    with pytest.raises(ValueError):
        ParameterSet([1.0, 1.0])
    with pytest.raises(ValueError):
        ParameterSet([])


def test_reassembly_exhaustive():
    for m1 in range(1, 51):
        S = ParameterSet(np.arange(float(m1)))
        for K in range(1, m1 + 1):
            P = split(S, K)
            joined = [i for k in range(K) for i in P.indices(k)]
            assert joined == list(range(m1))
            sizes = P.sizes()
            assert max(sizes) - min(sizes) <= 1
            assert sizes == sorted(sizes, reverse=True)
            for i in (0, m1 - 1, m1 // 2):
                k, j = P.subset_of(i)
                assert P.indices(k)[j] == i


def test_upper_median_splits_in_halves_exhaustive():
    for n in range(1, 51):
        vals = np.arange(float(n))
        med = vals[upper_median_index(n) - 1]
        assert np.sum(vals <= med) >= n / 2
        assert np.sum(vals >= med) >= n / 2


def test_split_is_deterministic():
    S = ParameterSet.uniform(0, 1, 37)
    assert split(S, 5).boundaries == split(S, 5).boundaries
