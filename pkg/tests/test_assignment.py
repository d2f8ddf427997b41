import time

import numpy as np
import pytest

from ctwix.assignment import match_max
from oracles import brute_force_best


def check_matching(mt, n, m):
    rows = [r for r, _ in mt.pairs] + mt.unmatched_rows
    cols = [c for _, c in mt.pairs] + mt.unmatched_cols
    assert sorted(rows) == list(range(n))
    assert sorted(cols) == list(range(m))


def test_spec_example():
    s = np.array([[1.0, 2.0], [3.0, 0.0]])
    mt = match_max(s)
    assert mt.pairs == [(0, 1), (1, 0)]
    assert mt.total(s) == 5.0
    assert brute_force_best(s, -np.inf) == 5.0


def test_all_below_threshold():
    s = np.array([[0.1, 0.2], [0.3, 0.0]])
    mt = match_max(s, 0.5)
    assert mt.pairs == [] and mt.unmatched_rows == [0, 1] and mt.unmatched_cols == [0, 1]


def test_strict_threshold():
    mt = match_max(np.array([[0.5]]), 0.5)
    assert mt.pairs == []
    assert match_max(np.array([[0.5]]), 0.4999).pairs == [(0, 0)]


def test_nan_raises():
    with pytest.raises(ValueError):
        match_max(np.array([[np.nan, 1.0]]))


def test_empty_matrix():
    mt = match_max(np.zeros((0, 3)))
    assert mt.pairs == [] and mt.unmatched_cols == [0, 1, 2]


def test_threshold_excluded_before_solving():
    # unconstrained optimum uses (0,0)+(1,1) = 2.0 but (1,1) is infeasible; best feasible is 1.9
    s = np.array([[1.9, 1.0], [0.95, 0.1]])
    mt = match_max(s, 0.5)
    assert mt.pairs == [(0, 1), (1, 0)]
    assert mt.total(s) == pytest.approx(brute_force_best(s, 0.5))


def test_random_against_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n, m = rng.integers(1, 7, size=2)
        s = rng.normal(size=(n, m))
        th = rng.choice([-np.inf, -0.5, 0.0, 0.3])
        mt = match_max(s, th)
        check_matching(mt, n, m)
        assert all(s[r, c] > th for r, c in mt.pairs)
        assert mt.total(s) == pytest.approx(brute_force_best(s, th), abs=1e-12)


def test_transpose_symmetry():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = rng.uniform(size=(rng.integers(1, 6), rng.integers(1, 6)))
        a = match_max(s, 0.2)
        b = match_max(s.T, 0.2)
        assert a.total(s) == pytest.approx(b.total(s.T), abs=1e-12)
        if len(set(np.round(s.ravel(), 12))) == s.size:
            assert sorted((c, r) for r, c in a.pairs) == b.pairs


def test_large_matrix_fast():
    s = np.random.default_rng(2).uniform(size=(200, 200))
    t = time.perf_counter()
    match_max(s, 0.1)
    assert time.perf_counter() - t < 0.05
