import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import wraps_by_cover
from rydqec.exceptions import ValidationError
from rydqec.percolation import percolates, survival_curve


def _bonds(k, L):
    return np.array([(k >> i) & 1 for i in range(2 * L * L)], dtype=bool).reshape(2, L, L)


def test_3x3_bond_exhaustive():
    L = 3
    sites = np.ones((L, L), dtype=bool)
    for k in range(2 ** (2 * L * L)):
        b = _bonds(k, L)
        assert percolates(sites, b) == wraps_by_cover(sites, b), k


def test_2x2_site_bond_exhaustive():
    L = 2
    for ks in range(2 ** (L * L)):
        sites = np.array([(ks >> i) & 1 for i in range(L * L)], dtype=bool).reshape(L, L)
        for kb in range(2 ** (2 * L * L)):
            b = _bonds(kb, L)
            assert percolates(sites, b) == wraps_by_cover(sites, b)


@settings(max_examples=300, deadline=None)
@given(st.integers(3, 7), st.integers(0, 2 ** 32 - 1), st.floats(0.1, 0.7))
def test_random_site_bond_matches_cover(L, seed, r):
    rng = np.random.default_rng(seed)
    sites = rng.random((L, L)) >= r
    b = rng.random((2, L, L)) >= r
    assert percolates(sites, b) == wraps_by_cover(sites, b)


def test_wrapping_rules():
    L = 4
    sites = np.ones((L, L), dtype=bool)
    b = np.zeros((2, L, L), dtype=bool)
    b[0, :, 1] = True                       # one straight line along x
    assert percolates(sites, b, "either") and not percolates(sites, b, "both")
    b[1, 2, :] = True
    assert percolates(sites, b, "both")
    # a diagonal staircase winds in both directions at once
    d = np.zeros((2, L, L), dtype=bool)
    for i in range(L):
        d[0, i, i] = True
        d[1, (i + 1) % L, i] = True
    assert percolates(sites, d, "both")
    assert not percolates(np.zeros((L, L), dtype=bool), np.ones((2, L, L), dtype=bool))
    with pytest.raises(ValidationError):
        percolates(sites, b, "sometimes")
    with pytest.raises(ValidationError):
        percolates(sites, b[:, :3])


def test_survival_limits_and_determinism():
    a = survival_curve([8, 16], [0.0, 0.45, 0.55, 1.0], trials=100, seed=3)
    b = survival_curve([8, 16], [0.0, 0.45, 0.55, 1.0], trials=100, seed=3)
    for L in (8, 16):
        assert np.array_equal(a.survival[L], b.survival[L])
        assert a.survival[L][0] == 1.0 and a.survival[L][-1] == 0.0
    with pytest.raises(ValidationError):
        survival_curve([8], [0.1, 0.2], trials=10, mode="site-only")
