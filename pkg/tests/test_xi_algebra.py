import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffdelay.core import validate
from diffdelay.frequency import h_eval
from diffdelay.xi_algebra import (CapabilityError, ch_coefficients, ch_identity_residual, det_h_exppoly,
                                  multi_indices, xi_table)


def test_base_and_unit_indices():
    rng = np.random.default_rng(1)
    s = validate([1, 2], [rng.integers(-3, 4, (3, 3)) for _ in range(2)], np.ones((3, 1)))
    t = xi_table(s, 3)
    assert np.array_equal(t[(0, 0)], np.eye(3))
    assert np.array_equal(t[(1, 0)], s.A[0])
    assert np.array_equal(t[(0, 1)], s.A[1])
    assert np.array_equal(t[(-1, 2)], np.zeros((3, 3)))


def test_identity_matrices_give_binomials():
    s = validate([1, 2], [np.eye(2), np.eye(2)], np.ones((2, 1)))
    t = xi_table(s, 8)
    for n in t.keys():
        assert np.array_equal(t[n], math.comb(sum(n), n[0]) * np.eye(2))


def test_recursion_consistency_exact():
    rng = np.random.default_rng(2)
    s = validate([1, 2, 3], [rng.integers(-3, 4, (2, 2)) for _ in range(3)], np.ones((2, 1)))
    t = xi_table(s, 5, exact=True)
    for n in t.keys():
        if sum(n) == 0:
            continue
        acc = t[n].copy()
        for k in range(3):
            e = tuple(v - (1 if j == k else 0) for j, v in enumerate(n))
            acc = acc - s.A_exact[k] @ t[e]
        assert all(v == 0 for v in acc.ravel())


def test_depth_budget():
    s = validate([1, 2, 3], [np.eye(4)] * 3, np.ones((4, 1)))
    with pytest.raises(CapabilityError):
        xi_table(s, 200, max_entries=10_000)
    with pytest.raises(ValueError):
        xi_table(s, -1)


def test_multi_indices_count():
    assert len(list(multi_indices(3, 4))) == math.comb(6, 2)


def test_ch_zero_matrices():
    s = validate([1, 2], [np.zeros((3, 3))] * 2, np.ones((3, 1)))
    assert ch_coefficients(s) == {(0, 0): 1}


def test_ch_scalar_two_delays():
    s = validate([1, 2], [[[3]], [[-5]]], [[1]])
    assert ch_coefficients(s) == {(0, 0): 1, (1, 0): -3, (0, 1): 5}


def test_ch_single_delay_matches_eigenvalues():
    rng = np.random.default_rng(3)
    A = rng.integers(-4, 5, (3, 3))
    s = validate([1], [A], np.ones((3, 1)))
    c = ch_coefficients(s)
    lam = np.linalg.eigvals(A.astype(float))
    poly = np.poly(lam)  # prod (1 - t lam) = sum_k poly[k] t^k
    for k in range(4):
        assert float(c.get((k,), 0)) == pytest.approx(poly[k].real, abs=1e-9)


def test_ch_cap():
    s = validate([1], [np.eye(7)], np.ones((7, 1)))
    with pytest.raises(CapabilityError):
        ch_coefficients(s)


def test_ch_identity_small_n_is_error():
    s = validate([1], [np.eye(2)], np.ones((2, 1)))
    t = xi_table(s, 3)
    with pytest.raises(ValueError):
        ch_identity_residual(t, ch_coefficients(s), (1,), 2)


def test_ch_identity_zero_matrices():
    s = validate([1, 2], [np.zeros((2, 2))] * 2, np.ones((2, 1)))
    t = xi_table(s, 4)
    assert ch_identity_residual(t, ch_coefficients(s), (2, 1), 2) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 3))
def test_ch_identity_exact(seed, d, N):
    rng = np.random.default_rng(seed)
    s = validate(list(range(1, N + 1)), [rng.integers(-3, 4, (d, d)) for _ in range(N)], np.ones((d, 1)))
    c = ch_coefficients(s)
    assert c[(0,) * N] == 1
    t = xi_table(s, d + 2, exact=True)
    for total in range(d, d + 3):
        for n in multi_indices(N, total):
            assert ch_identity_residual(t, c, n, d) == 0


def test_generating_function_neumann_tail():
    rng = np.random.default_rng(4)
    d, N, D = 2, 2, 20
    As = [rng.normal(size=(d, d)) for _ in range(N)]
    s = validate([1, 2], As, np.ones((d, 1)))
    tab = xi_table(s, D)
    for _ in range(5):
        tt = rng.normal(size=N)
        scale = sum(abs(tt[j]) * np.linalg.norm(As[j], 2) for j in range(N))
        tt *= 0.45 / scale
        acc = sum(tab[n] * np.prod(tt ** np.array(n)) for n in tab.keys())
        exact = np.linalg.inv(np.eye(d) - sum(tt[j] * As[j] for j in range(N)))
        assert np.linalg.norm(acc - exact, 2) <= 0.5 ** (D + 1) / (1 - 0.5)


def test_det_exppoly_trivial_cases():
    s = validate([1, 2], [np.zeros((2, 2))] * 2, np.ones((2, 1)))
    f = det_h_exppoly(s)
    assert f.is_constant and f.coeffs == (1,)
    s = validate([1], [[["2/3"]]], [[1]])
    f = det_h_exppoly(s)
    assert f.exact_exponents == (0, 1) and f.coeffs == (1, Fraction(-2, 3))


def test_det_exppoly_groups_equal_exponents():
    s = validate([1, 2], [np.eye(2), np.eye(2)], np.ones((2, 1)))
    f = det_h_exppoly(s)
    assert len(f.exponents) == len(set(f.exponents))
    assert f.exact_exponents == tuple(sorted(f.exact_exponents))


@pytest.mark.parametrize("delays", [[1, 2], ["1/3", "5/7"], [0.7071067811865476, 1.0]])
def test_det_exppoly_matches_direct_determinant(delays):
    rng = np.random.default_rng(5)
    s = validate(delays, [rng.integers(-2, 3, (2, 2)) for _ in range(2)], np.ones((2, 1)))
    f = det_h_exppoly(s)
    p = rng.normal(size=100) * 0.8 + 1j * rng.normal(size=100) * 5
    direct = np.linalg.det(h_eval(s, p))
    np.testing.assert_allclose(f(p), direct, rtol=1e-10, atol=1e-12)
    h = 1e-6
    np.testing.assert_allclose(f.derivative(p[:5]), (f(p[:5] + h) - f(p[:5] - h)) / (2 * h), rtol=1e-5, atol=1e-6)
