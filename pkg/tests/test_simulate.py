import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from wonhamsplit import (JOINT, MARGINAL, NumericalError, SwitchingModel, UsageError,
                         filter_step, project_simplex, simulate_path, simulate_terminal,
                         step_joint, step_marginal)
from wonhamsplit.diagnostics import duality_check
from wonhamsplit.rng import TAG_PATH, normals
from wonhamsplit.simulate import JointState, MarginalState, last_step, n_steps

finite = st.floats(-1e3, 1e3, allow_nan=False)


# -- time grid -------------------------------------------------------------------

def test_grid_counts():
    assert n_steps(1.0, 1e-3) == 1000
    assert n_steps(1.0, 0.1) == 10
    assert n_steps(1.0, 0.3) == 4
    assert last_step(1.0, 0.3) == pytest.approx(0.1)
    assert n_steps(0.5, 0.5) == 1


# -- projection ------------------------------------------------------------------

def test_projection_examples():
    assert np.array_equal(project_simplex([0.3, 0.7]), [0.3, 0.7])
    assert np.array_equal(project_simplex([1.2, -0.2]), [1.0, 0.0])
    np.testing.assert_array_equal(project_simplex([0.5, 0.5, 0.5]), np.full(3, 1 / 3))


def test_projection_fallback_is_uniform():
    assert np.array_equal(project_simplex([-1.0, -2.0, 0.0, 0.0]), np.full(4, 0.25))


def test_projection_rejects_non_finite():
    with pytest.raises(NumericalError):
        project_simplex([np.nan, 1.0])


@given(arrays(float, st.integers(1, 6), elements=finite))
def test_projection_lands_on_simplex(v):
    p = project_simplex(v)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1) <= 1e-12


# -- filter step -----------------------------------------------------------------

def two_mode_filter_by_hand(b1, b2, a, c, x_from, x_to, p, h):
    """Two-component recursion written out in scalars, then clip and renormalise."""
    bbar = p * b1 + (1 - p) * b2
    innov = (x_to - x_from) - bbar * h
    gain = p * (1 - p) * (b1 - b2)
    q1 = p + h * (c * (1 - p) - a * p) + gain * innov
    q2 = (1 - p) + h * (a * p - c * (1 - p)) - gain * innov
    q1, q2 = max(q1, 0.0), max(q2, 0.0)
    return np.array([q1, q2]) / (q1 + q2)


@given(b1=st.floats(-3, 3), b2=st.floats(-3, 3), a=st.floats(0, 5), c=st.floats(0, 5),
       x=st.floats(-2, 2), dx=st.floats(-1, 1), p=st.floats(0, 1),
       h=st.floats(1e-4, 0.1))
def test_filter_matches_hand_expanded_two_mode_formula(b1, b2, a, c, x, dx, p, h):
    model = SwitchingModel.build([[b1], [b2]], [[0.0, a], [c, 0.0]])
    got = filter_step(model, [x], [x + dx], [p, 1 - p], h)
    want = two_mode_filter_by_hand(b1, b2, a, c, x, x + dx, p, h)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@given(x=arrays(float, 2, elements=st.floats(-5, 5)), dx=arrays(float, 2, elements=st.floats(-2, 2)),
       v=arrays(float, 3, elements=st.floats(0, 1)), h=st.floats(1e-4, 0.2))
def test_filter_output_on_simplex(planar, x, dx, v, h):
    pi = project_simplex(v)
    out = filter_step(planar, x, x + dx, pi, h)
    assert np.all(out >= 0)
    assert abs(out.sum() - 1) <= 1e-12


@given(x=arrays(float, 2, elements=finite), dx=arrays(float, 2, elements=finite),
       j=st.integers(0, 2), h=st.floats(1e-6, 1.0))
def test_vertex_absorption_under_null_rates(x, dx, j, h):
    A = np.array([[[1.0, 0.0], [0.0, -1.0]], [[0.0, 2.0], [0.5, 0.0]], [[0.0, 0.0], [0.0, 0.0]]])
    model = SwitchingModel.build([[1.0, 0.0], [0.0, 1.0], [-1.0, 3.0]], drift_A=A)
    e = np.eye(3)[j]
    assert np.array_equal(filter_step(model, x, x + dx, e, h), e)


def test_single_mode_filter_is_one():
    model = SwitchingModel.build([[2.0]])
    assert np.array_equal(filter_step(model, [0.0], [5.0], [1.0], 0.1), [1.0])


def test_filter_rejects_bad_step(two_mode):
    with pytest.raises(UsageError):
        filter_step(two_mode, [0.0], [0.1], [0.5, 0.5], 0.0)


# -- single steps ------------------------------------------------------------------

def test_joint_step_without_rates_keeps_mode(two_mode):
    model = SwitchingModel.build([[-0.5], [1.5]])
    for u in (1e-9, 0.5, 1 - 1e-9):
        assert step_joint(model, JointState(np.zeros(1), 1, 0.0), 0.1, [0.3], u).theta == 1


def test_joint_step_zero_drift_zero_noise():
    model = SwitchingModel.build([[0.0, 0.0]])
    s = step_joint(model, JointState(np.array([1.0, -2.0]), 0, 0.0), 0.1, [0.0, 0.0], 0.5)
    assert np.array_equal(s.x, [1.0, -2.0])
    assert s.clock == 0.1


def test_joint_step_mode_draw_by_inverse_cdf():
    # mode switches when u falls in the h*lambda slice of row theta
    model = SwitchingModel.build([[0.0], [0.0]], [[0.0, 2.0], [0.0, 0.0]])
    assert step_joint(model, JointState(np.zeros(1), 0, 0.0), 0.1, [0.0], 0.79).theta == 0
    assert step_joint(model, JointState(np.zeros(1), 0, 0.0), 0.1, [0.0], 0.81).theta == 1


def test_joint_step_uses_pre_move_rates():
    # rate 0 -> 1 is ~0 at x = -10 and ~9 at x = +10
    from wonhamsplit.model import DriftSpec, InitialLaw, RateSpec
    rates = RateSpec.logistic([[0.0, 9.0], [0.0, 0.0]], np.full((2, 2, 1), 10.0), np.zeros((2, 2)))
    model = SwitchingModel(1, 2, DriftSpec.constant(np.zeros((2, 1))), rates,
                           InitialLaw(np.zeros(1), 0.0, np.array([1.0, 0.0])))
    s = step_joint(model, JointState(np.array([-10.0]), 0, 0.0), 0.1, [20.0], 0.5)
    assert s.x[0] == 10.0
    assert s.theta == 0


def test_joint_step_moves_by_mode_drift(two_mode):
    s = step_joint(two_mode, JointState(np.array([0.2]), 1, 0.0), 0.01, [0.05], 0.5)
    assert s.x[0] == 0.2 + 1.5 * 0.01 + 0.05


def test_unstable_step_rejected(two_mode):
    with pytest.raises(UsageError):
        step_joint(two_mode, JointState(np.zeros(1), 0, 0.0), 1.0, [0.0], 0.5)
    with pytest.raises(UsageError):
        step_marginal(two_mode, MarginalState(np.zeros(1), np.array([0.5, 0.5]), 0.0), 1.5, [0.0])


def test_marginal_step_filter_is_filter_step(planar):
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = rng.normal(size=2)
        pi = rng.dirichlet(np.ones(3))
        s = step_marginal(planar, MarginalState(x, pi, 0.0), 0.01, rng.normal(size=2) * 0.1)
        assert np.array_equal(s.pi, filter_step(planar, x, s.x, pi, 0.01))


def test_marginal_vertex_step_equals_joint_step():
    model = SwitchingModel.build([[-0.5], [1.5]])
    for j in range(2):
        e = np.eye(2)[j]
        sm = step_marginal(model, MarginalState(np.array([0.3]), e, 0.0), 0.01, [0.07])
        sj = step_joint(model, JointState(np.array([0.3]), j, 0.0), 0.01, [0.07], 0.5)
        assert np.array_equal(sm.x, sj.x)
        assert np.array_equal(sm.pi, e)


def test_single_mode_marginal_matches_joint():
    model = SwitchingModel.build([[0.7]])
    sm = step_marginal(model, MarginalState(np.array([0.1]), np.array([1.0]), 0.0), 0.02, [-0.1])
    sj = step_joint(model, JointState(np.array([0.1]), 0, 0.0), 0.02, [-0.1], 0.3)
    assert np.array_equal(sm.x, sj.x)
    assert np.array_equal(sm.pi, [1.0])


# -- whole paths -----------------------------------------------------------------

@pytest.mark.parametrize("dynamics", [JOINT, MARGINAL])
def test_path_replays_public_steps(planar, dynamics):
    """The fused path kernel performs exactly the public single-step updates."""
    h, T, seed, stream = 0.01, 0.3, 11, 5
    traj = simulate_path(planar, dynamics, h, T, seed, stream)
    state = traj.states()[0]
    sizes = traj.segment.step_sizes()
    assert len(sizes) == n_steps(T, h)
    for j, hj in enumerate(sizes):
        z, u = normals(seed, TAG_PATH, j, stream, 0, planar.d)
        dw = math.sqrt(hj) * z
        if dynamics == JOINT:
            state = step_joint(planar, state, hj, dw, u)
            assert state.theta == traj.theta[j + 1]
        else:
            state = step_marginal(planar, state, hj, dw)
            assert np.array_equal(state.pi, traj.pi[j + 1])
        assert np.array_equal(state.x, traj.x[j + 1])


def test_path_with_partial_last_step(two_mode):
    traj = simulate_path(two_mode, MARGINAL, 0.3, 1.0, 1)
    assert len(traj.x) == 5
    np.testing.assert_allclose(traj.times, [0, 0.3, 0.6, 0.9, 1.0])
    np.testing.assert_allclose(traj.segment.step_sizes(), [0.3, 0.3, 0.3, 0.1])


def test_single_step_path(two_mode):
    traj = simulate_path(two_mode, JOINT, 0.25, 0.25, 1)
    assert traj.x.shape == (2, 1)
    assert traj.segment.t == 0.25


def test_point_mass_start(planar):
    model = SwitchingModel.build([[1.0, 1.0]], x0=[0.5, -0.5])
    for stream in range(5):
        assert np.array_equal(simulate_path(model, JOINT, 0.1, 1.0, 3, stream).x[0], [0.5, -0.5])
    # a Gaussian start moves the first point
    assert not np.array_equal(simulate_path(planar, JOINT, 0.1, 1.0, 3).x[0], planar.initial.x0)


def test_marginal_path_starts_at_mode_law(planar):
    traj = simulate_path(planar, MARGINAL, 0.05, 0.5, 9)
    assert np.array_equal(traj.pi[0], planar.initial.theta_probs)


@pytest.mark.parametrize("dynamics", [JOINT, MARGINAL])
def test_paths_are_reproducible(planar, dynamics):
    a = simulate_path(planar, dynamics, 0.01, 1.0, 42, 7)
    b = simulate_path(planar, dynamics, 0.01, 1.0, 42, 7)
    c = simulate_path(planar, dynamics, 0.01, 1.0, 42, 8)
    assert np.array_equal(a.x, b.x)
    assert not np.array_equal(a.x, c.x)


def test_driftless_terminal_mean():
    model = SwitchingModel.build([[0.0, 0.0]])
    n, T = 100_000, 1.0
    x, *_ = simulate_terminal(model, JOINT, 1e-2, T, n, 5)
    assert np.all(np.abs(x.mean(axis=0)) <= 3 * math.sqrt(T / n))
    np.testing.assert_allclose(x.var(axis=0), T, rtol=0.02)


def test_mode_marginals_match_matrix_exponential():
    lam = np.array([[-2.0, 2.0], [1.0, -1.0]])
    p0 = np.array([0.9, 0.1])
    model = SwitchingModel.build([[0.3], [-0.3]], lam, theta_probs=p0)
    n, T = 100_000, 1.0
    _, theta, _, _ = simulate_terminal(model, JOINT, 1e-3, T, n, 8)
    want = p0 @ expm(lam * T)
    got = np.bincount(theta, minlength=2) / n
    se = np.sqrt(want * (1 - want) / n)
    assert np.all(np.abs(got - want) <= 3 * se), (got, want, se)


def test_filter_mean_matches_joint_mode_law(two_mode):
    tests = {"mode 0": (lambda x: np.ones(len(x)), [1.0, 0.0]),
             "mode 1": (lambda x: np.ones(len(x)), [0.0, 1.0])}
    for r in duality_check(two_mode, tests, 1.0, 2e-3, 100_000, 13):
        assert abs(r.z) <= 3, r


def test_terminal_batch_diagnostics(two_mode):
    *_, diag = simulate_terminal(two_mode, MARGINAL, 1e-2, 1.0, 1000, 2)
    assert diag[0] == 1000 * 100
    assert diag[1] <= 1e-12
    assert diag[2] >= 0


def test_unknown_dynamics(two_mode):
    with pytest.raises(UsageError):
        simulate_path(two_mode, "hybrid", 0.1, 1.0, 1)
