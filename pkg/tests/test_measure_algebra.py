from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffdelay.core import ValidationError, validate
from diffdelay.frequency import q_hat_eval
from diffdelay.measure_algebra import (AtomicMeasure, ClusterError, NoSolution, StateError, SupportError,
                                       bezout_construct_commensurable, bezout_residual, convolve, dumps,
                                       extend_state, loads, measure_laplace, motion_plan, neumann_residual,
                                       p_of, pbh_witness, q_inverse_truncated, q_of, round_trip_residual,
                                       simulate_plan, transfer_truncated, truncate_pi)

from sysgen import L_IRR, random_commensurable, uncontrollable_system

F = Fraction


def _m(atoms, shape=(1, 1), exact=True):
    return AtomicMeasure.build(atoms, shape, exact)


def _same(a, b):
    return a.locs == b.locs and all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights))


@st.composite
def measures(draw, shape=(2, 2), exact=True, lo=-6, hi=6):
    n = draw(st.integers(0, 4))
    atoms = []
    for _ in range(n):
        loc = F(draw(st.integers(lo, hi)), 2)
        w = np.array(draw(st.lists(st.integers(-3, 3), min_size=shape[0] * shape[1],
                                   max_size=shape[0] * shape[1]))).reshape(shape)
        atoms.append((loc, w))
    return AtomicMeasure.build(atoms, shape, exact)


# -- algebra -----------------------------------------------------------------------

def test_dirac_product():
    W1, W2 = np.array([[1, 2], [3, 4]]), np.array([[0, 1], [1, 0]])
    c = convolve(AtomicMeasure.dirac(F(1, 3), W1), AtomicMeasure.dirac(F(1, 2), W2))
    assert c.locs == (F(5, 6),) and np.array_equal(c.weights[0], W1 @ W2)


def test_identity_element():
    a = _m([(-1, [[1, 2], [3, 4]]), (F(1, 2), [[0, 1], [0, 0]])], (2, 2))
    e = AtomicMeasure.dirac(0, np.eye(2, dtype=int))
    assert _same(convolve(a, e), a) and _same(convolve(e, a), a)


def test_middle_atoms_cancel():
    a = _m([(0, [[1]]), (1, [[-1]])])
    b = _m([(0, [[1]]), (1, [[1]])])
    c = convolve(a, b)
    assert c.locs == (0, 2) and [w[0, 0] for w in c.weights] == [1, -1]


def test_shape_mismatch():
    with pytest.raises(ValueError):
        convolve(AtomicMeasure.dirac(0, np.ones((2, 2), dtype=int)), AtomicMeasure.dirac(0, np.ones((3, 1), dtype=int)))


@settings(max_examples=40, deadline=None)
@given(measures(), measures(), measures())
def test_associativity_exact(a, b, c):
    assert _same(convolve(convolve(a, b), c), convolve(a, convolve(b, c)))


@settings(max_examples=40, deadline=None)
@given(measures(), measures(), measures(), st.integers(-3, 3))
def test_bilinearity_exact(a, b, c, k):
    assert _same(convolve(a, b + c), convolve(a, b) + convolve(a, c))
    assert _same(convolve(a.scale(k), b), convolve(a, b).scale(k))


@settings(max_examples=30, deadline=None)
@given(measures(), measures(), measures())
def test_associativity_float(a, b, c):
    a, b, c = a.to_float(), b.to_float(), c.to_float()
    x = convolve(convolve(a, b), c)
    y = convolve(a, convolve(b, c))
    assert (x - y).max_norm() <= 1e-12 * (1 + x.max_norm())


def test_pi_examples():
    W = np.array([[1, 2], [3, 4]])
    assert truncate_pi(AtomicMeasure.dirac(0, np.eye(2, dtype=int))).is_zero
    assert _same(truncate_pi(AtomicMeasure.dirac(1, W)), AtomicMeasure.dirac(1, W))
    m = _m([(-1, W), (0, W), (2, W)], (2, 2))
    assert _same(truncate_pi(m), AtomicMeasure.dirac(2, W))


@settings(max_examples=40, deadline=None)
@given(measures(hi=0), measures())
def test_pi_laws(a, b):
    assert _same(truncate_pi(truncate_pi(b)), truncate_pi(b))
    # a is supported in the nonpositive half-line
    assert _same(truncate_pi(convolve(a, truncate_pi(b))), truncate_pi(convolve(a, b)))


def test_laplace_examples():
    rng = np.random.default_rng(0)
    for p in rng.normal(size=5) + 1j * rng.normal(size=5):
        np.testing.assert_allclose(measure_laplace(AtomicMeasure.dirac(F(3, 2), np.eye(2, dtype=int)), p),
                                   np.exp(-1.5 * p) * np.eye(2), rtol=1e-14)
    assert np.all(measure_laplace(AtomicMeasure.zero((2, 2)), 1 + 1j) == 0)


@settings(max_examples=20, deadline=None)
@given(measures(), measures(), st.integers(0, 2**32 - 1))
def test_laplace_homomorphism(a, b, seed):
    rng = np.random.default_rng(seed)
    for p in rng.normal(size=20) * 0.5 + 1j * rng.normal(size=20) * 3:
        lhs = measure_laplace(convolve(a, b), p)
        rhs = measure_laplace(a, p) @ measure_laplace(b, p)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * (1 + np.linalg.norm(rhs))


# -- system measures -----------------------------------------------------------------

def test_q_and_p_single_delay():
    s = validate(["3/2"], [[[1, 2], [3, 4]]], [[1], [0]])
    Q = q_of(s)
    assert Q.locs == (F(-3, 2), 0)
    assert np.array_equal(Q.weights[0], np.eye(2)) and np.array_equal(Q.weights[1], -s.A_exact[0])
    P = p_of(s)
    assert P.locs == (0,) and np.array_equal(P.weights[0], s.B_exact)


@pytest.mark.parametrize("delays", [["1/2", 1], [1, 2, 3], [L_IRR, 1.0]])
def test_q_laplace_matches_frequency(delays):
    rng = np.random.default_rng(1)
    s = validate(delays, [rng.integers(-2, 3, (2, 2)) for _ in delays], np.ones((2, 1)))
    Q = q_of(s)
    for p in rng.normal(size=20) + 1j * rng.normal(size=20) * 4:
        Qh = q_hat_eval(s, p)
        assert np.linalg.norm(measure_laplace(Q, p) - Qh) <= 1e-12 * (1 + np.linalg.norm(Qh))


def test_q_inverse_zero_matrices():
    s = validate([1, 2], [np.zeros((2, 2), dtype=int)] * 2, np.ones((2, 1)))
    Qi = q_inverse_truncated(s, 10)
    assert Qi.locs == (2,) and np.array_equal(Qi.weights[0], np.eye(2))


def test_q_inverse_first_atoms():
    s = validate(["1/2", 1], [[[1, 1], [0, 1]], [[2, 0], [1, 0]]], np.ones((2, 1)))
    Qi = q_inverse_truncated(s, 2)
    assert Qi.locs[0] == 1 and np.array_equal(Qi.weights[0], np.eye(2))
    assert np.array_equal(Qi.weight_at(F(3, 2)), s.A_exact[0])
    assert np.array_equal(Qi.weight_at(2), s.A_exact[1] + s.A_exact[0] @ s.A_exact[0])


@pytest.mark.parametrize("delays", [["1/3", "1/2", 1], [L_IRR, 1.0]])
def test_neumann_residual_zero(delays):
    rng = np.random.default_rng(2)
    s = validate(delays, [rng.integers(-2, 3, (2, 2)) for _ in delays], np.ones((2, 1)))
    assert neumann_residual(s, 5) == 0
    with pytest.raises(ValueError):
        q_inverse_truncated(s, 0.5)


def test_transfer_is_q_inverse_times_b():
    s = validate(["1/2", 1], [[[1, 1], [0, 1]], [[2, 0], [1, 0]]], [[1], [2]])
    A = transfer_truncated(s, 4)
    Qi = q_inverse_truncated(s, 4)
    assert _same(A, convolve(Qi, p_of(s)))


# -- Bezout --------------------------------------------------------------------------

def test_bezout_scalar():
    s = validate([1], [[["1/2"]]], [[1]])
    pair = bezout_construct_commensurable(s)
    assert pair.R.is_zero and _same(pair.S, AtomicMeasure.dirac(0, np.array([[1]])))
    assert bezout_residual(s, pair.R, pair.S) == 0


def test_bezout_zero_pair_has_unit_defect():
    s = validate([1], [[[2]]], [[1]])
    assert bezout_residual(s, AtomicMeasure.zero((1, 1)), AtomicMeasure.zero((1, 1))) == 1


def test_bezout_nilpotent_controllable_pair():
    s = validate([1], [[[0, 1], [0, 0]]], [[0], [1]])
    pair = bezout_construct_commensurable(s)
    assert not isinstance(pair, NoSolution)
    assert bezout_residual(s, pair.R, pair.S) == 0


def test_bezout_uncontrollable_diagonal():
    s = validate([1], [[[2, 0], [0, 3]]], [[1], [0]])
    out = bezout_construct_commensurable(s)
    assert isinstance(out, NoSolution)
    assert out.z == 3
    assert pbh_witness(s).z == 3


def test_bezout_support_check():
    s = validate([1], [[[2]]], [[1]])
    with pytest.raises(SupportError):
        bezout_residual(s, AtomicMeasure.zero((1, 1)), AtomicMeasure.dirac(1, np.array([[1]])))


def test_bezout_requires_commensurable():
    s = validate([L_IRR, 1.0], [[[1]], [[1]]], [[1]], delay_class="independent")
    with pytest.raises(ValidationError):
        bezout_construct_commensurable(s)


@pytest.mark.parametrize("seed", range(6))
def test_bezout_random_commensurable(seed):
    rng = np.random.default_rng(seed)
    s = random_commensurable(rng, int(rng.integers(1, 4)), int(rng.integers(1, 3)), F(1, 2), lo=-1, hi=1)
    out = bezout_construct_commensurable(s)
    if isinstance(out, NoSolution):
        assert pbh_witness(s) is not None
    else:
        assert bezout_residual(s, out.R, out.S) == 0


@pytest.mark.parametrize("seed", range(4))
def test_bezout_hidden_uncontrollable(seed):
    rng = np.random.default_rng(seed)
    s = uncontrollable_system(rng, 3, [F(1, 2), F(1)])
    assert isinstance(bezout_construct_commensurable(s), NoSolution)


# -- motion planning -----------------------------------------------------------------

def _pair(s):
    out = bezout_construct_commensurable(s)
    assert not isinstance(out, NoSolution)
    return out.R, out.S


def test_motion_plan_zero_target():
    s = validate([1], [[[0, 1], [0, 0]]], [[0], [1]])
    R, S = _pair(s)
    plan = motion_plan(s, R, S, AtomicMeasure.zero((2, 1)), 6)
    assert plan.omega.is_zero


def test_motion_plan_q_inverse_column_round_trip():
    s = validate(["1/2", 1], [[[0, 1], [1, 0]], [[1, 0], [0, 0]]], [[0], [1]])
    R, S = _pair(s)
    psi = q_inverse_truncated(s, 8).column(0)
    W = 6
    plan = motion_plan(s, R, S, psi, W)
    assert round_trip_residual(s, plan.omega, psi, plan.valid_upto) == 0


def test_motion_plan_scalar_simulation():
    s = validate([1], [[["1/2"]]], [[1]])
    R, S = _pair(s)
    psi = extend_state(s, AtomicMeasure.dirac(1, np.array([[1]])), 8)
    plan = motion_plan(s, R, S, psi, 8)
    assert _same(plan.omega, AtomicMeasure.dirac(0, np.array([[1]])))
    sv, y = simulate_plan(s, plan.omega, F(1, 4), 6)
    target = truncate_pi(psi)
    for loc, val in zip(sv, y[:, 0]):
        assert val == pytest.approx(float(target.weight_at(F(loc).limit_denominator(8))[0, 0]), abs=1e-12)


def test_motion_plan_rejects_non_state():
    s = validate([1], [[["1/2"]]], [[1]])
    R, S = _pair(s)
    with pytest.raises(StateError):
        motion_plan(s, R, S, AtomicMeasure.dirac(1, np.array([[1]])), 6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_motion_plan_round_trip_property(seed):
    rng = np.random.default_rng(seed)
    s = random_commensurable(rng, 2, 2, F(1, 2), lo=-1, hi=1)
    out = bezout_construct_commensurable(s)
    if isinstance(out, NoSolution):
        return
    seed_atoms = [(F(k, 2), rng.integers(-2, 3, (2, 1))) for k in range(1, int(2 * s.exact_delays[-1]) + 1)]
    W = 10
    psi = extend_state(s, AtomicMeasure.build(seed_atoms, (2, 1), True), W + 2)
    span = -out.S.locs[0] if not out.S.is_zero else 0
    if W < s.exact_delays[-1] + span:
        return
    plan = motion_plan(s, out.R, out.S, psi, W)
    assert round_trip_residual(s, plan.omega, psi, plan.valid_upto) == 0


# -- serialization -------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(measures(shape=(2, 1)))
def test_round_trip_exact(m):
    assert _same(loads(dumps(m)), m)


def test_round_trip_float():
    m = _m([(-0.25, [[0.1], [2.5]]), (1 / 3, [[-1e-3], [7.0]])], (2, 1), exact=False)
    back = loads(dumps(m))
    assert not back.exact and _same(back, m)


def test_loads_errors():
    with pytest.raises(ValueError):
        loads("0 1\n")
    with pytest.raises(ValueError):
        loads("# shape 1 2\n0 1\n")


def test_cluster_error():
    with pytest.raises(ClusterError):
        _m([(0.0, [[1]]), (5e-12, [[1]])], exact=False)
    merged = _m([(0.0, [[1]]), (1e-13, [[1]])], exact=False)
    assert len(merged) == 1 and merged.weights[0][0, 0] == 2
