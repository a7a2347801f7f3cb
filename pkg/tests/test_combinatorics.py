"""Brute-force verification of the sampling and counting inequalities."""

import itertools

import numpy as np
import pytest


def falling_factorial(x: int, ell: int) -> int:
    out = 1
    for i in range(ell):
        out *= x - i
    return out


def replacement_gap(a_table: np.ndarray, n: int, ell: int) -> float:
    """|mean over all index tuples - mean over distinct tuples from {2..n}|."""
    full = sum(
        a_table[s] for s in itertools.product(range(n), repeat=ell)
    ) / n**ell
    distinct = list(itertools.permutations(range(1, n), ell))
    if not distinct:
        return abs(full)
    partial = sum(a_table[s] for s in distinct) / len(distinct)
    return abs(full - partial)


def test_product_one_minus_inequality(rng):
    # 1 - prod(1 - c_i) <= sum c_i on random tuples in [0, 1]^m
    for _ in range(1000):
        m = int(rng.integers(1, 7))
        c = rng.uniform(0.0, 1.0, size=m)
        assert 1.0 - np.prod(1.0 - c) <= c.sum() + 1e-12


def test_distinct_tuple_count_inequality():
    # |distinct tuples from {2..n} leaving {k+1..n}| / (n-1)_ell
    for n in range(2, 11):
        for ell in range(1, 4):
            if ell >= n:
                continue
            for k in range(1, n):
                universe = set(range(2, n + 1))
                allowed = set(range(k + 1, n + 1))
                total = [s for s in itertools.permutations(universe, ell)]
                escaped = [s for s in total if not set(s) <= allowed]
                lhs = len(escaped) / falling_factorial(n - 1, ell)
                assert lhs <= ell * (k - 1) / (n - ell) + 1e-12
                # closed-form cross-check of both counts
                assert len(total) == falling_factorial(n - 1, ell)
                if ell <= n - k:
                    expected = falling_factorial(n - 1, ell) - falling_factorial(n - k, ell)
                    assert len(escaped) == expected


def test_replacement_gap_inequality(rng):
    # with-replacement vs without-replacement averages of bounded tables
    cases = [(n, ell) for n in range(2, 9) for ell in range(1, 4)]
    tables_per_case = max(1, 200 // len(cases) + 1)
    count = 0
    for n, ell in cases:
        for _ in range(tables_per_case):
            table = rng.uniform(-1.0, 1.0, size=(n,) * ell)
            gap = replacement_gap(table, n, ell)
            assert gap <= ell * (ell + 1) / n + 1e-12
            count += 1
    assert count >= 200


def test_replacement_gap_is_tight_for_constant_tables():
    # constant table: gap is produced purely by the duplicate tuples
    n, ell = 4, 2
    table = np.ones((n,) * ell)
    gap = replacement_gap(table, n, ell)
    assert gap == pytest.approx(0.0, abs=1e-15)


def test_replacement_gap_empty_distinct_set():
    # ell >= n leaves no distinct tuples over {2..n}: bound still holds
    n, ell = 3, 3
    table = np.full((n,) * ell, 1.0)
    assert replacement_gap(table, n, ell) <= ell * (ell + 1) / n
