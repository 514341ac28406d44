"""Enclosure-feedback controller and the coupled closed-loop rollout."""

import numpy as np
import pytest

from framersynth.controller import (
    ClosedLoopState,
    ControllerGains,
    closed_loop_error_step,
    closed_loop_step,
    controller_step,
    run_closed_loop,
)
from framersynth.matops import IntervalVec
from framersynth.observer import decompose_model
from framersynth.plant import output_of, sample_noise


def _rand_gains(rng, n, m, scale=0.5):
    return ControllerGains(
        rng.uniform(-scale, scale, (n, n)), rng.uniform(-scale, scale, (n, n)),
        rng.uniform(-scale, scale, (n, n)), rng.uniform(-scale, scale, (m, n)),
        rng.uniform(-scale, scale, (m, n)), rng.uniform(-scale, scale, (m, n)),
        rng.uniform(-scale, scale, (n, n)), rng.uniform(-scale, scale, (m, n)),
    )


def test_gain_shape_validation():
    with pytest.raises(ValueError):
        ControllerGains(np.zeros((2, 3)), *[np.zeros((2, 2))] * 3, *[np.zeros((1, 2))] * 4)
    with pytest.raises(ValueError):
        ControllerGains(np.zeros((2, 2)), np.zeros((3, 2)), np.zeros((2, 2)),
                        np.zeros((1, 2)), np.zeros((1, 2)), np.zeros((1, 2)),
                        np.zeros((2, 2)), np.zeros((1, 2)))
    g = ControllerGains.zero(3, 2)
    assert g.is_zero()
    assert (g.n, g.m) == (3, 2)


def test_bound_input_matrices():
    rng = np.random.default_rng(1)
    g = _rand_gains(rng, 2, 1)
    np.testing.assert_array_equal(g.bound_input_matrix(), np.hstack([-g.Kb_lo, g.Kb_hi]))
    np.testing.assert_array_equal(g.bound_output_matrix(), np.hstack([-g.Kd_lo, g.Kd_hi]))
    stacked = np.concatenate([np.array([1.0, 2.0]), np.array([3.0, 4.0])])  # [xlo; xhi]
    np.testing.assert_allclose(
        g.bound_input_matrix() @ stacked,
        g.Kb_hi @ np.array([3.0, 4.0]) - g.Kb_lo @ np.array([1.0, 2.0]))


def test_controller_step_hand(scalar_model):
    """Scalar gains, numbers small enough to follow on paper."""
    dp = decompose_model(scalar_model)
    g = ControllerGains([[0.5]], [[2.0]], [[3.0]], [[-1.0]], [[4.0]], [[5.0]],
                        [[7.0]], [[9.0]])
    box = IntervalVec([-1.0], [2.0])
    # the model is linear, so the nu feedforward vanishes identically
    xc_next, u = controller_step(g, dp.phi, np.array([10.0]), box)
    np.testing.assert_allclose(u, [-1.0 * 10.0 + 4.0 * 2.0 - 5.0 * (-1.0)])
    np.testing.assert_allclose(xc_next, [0.5 * 10.0 + 2.0 * 2.0 - 3.0 * (-1.0)])


def test_controller_nu_feedforward(trig2):
    """Nonlinear model: nu is the actual spread of the extension."""
    dp = trig2.decomposition()
    n, m = trig2.model.n, trig2.model.m
    g = ControllerGains.zero(n, m)
    g.Kx_nu = np.eye(n)
    g.Ku_nu = np.ones((m, n))
    box = IntervalVec(-np.ones(n), np.ones(n))
    nu = dp.phi.eval_pair(box.hi, box.lo) - dp.phi.eval_pair(box.lo, box.hi)
    assert np.any(nu > 0)
    xc_next, u = controller_step(g, dp.phi, np.zeros(n), box)
    np.testing.assert_allclose(xc_next, nu, atol=1e-14)
    np.testing.assert_allclose(u, np.ones((m, n)) @ nu, atol=1e-14)
    # a collapsed enclosure kills the feedforward
    pt = IntervalVec(0.3 * np.ones(n), 0.3 * np.ones(n))
    xc_next, u = controller_step(g, dp.phi, np.zeros(n), pt)
    np.testing.assert_allclose(xc_next, np.zeros(n), atol=1e-14)


def test_closed_loop_step_causal_order(trig2):
    """y must be measured under the input issued at the same step."""
    m = trig2.model
    dp = trig2.decomposition()
    rng = np.random.default_rng(0)
    g = _rand_gains(rng, m.n, m.m)
    L = 0.1 * np.ones((m.n, m.l))
    state = ClosedLoopState(np.array([0.4, -0.2]),
                            IntervalVec(-np.ones(2), np.ones(2)),
                            np.array([0.1, 0.3]))
    w = np.array([0.02, -0.01])
    v = np.array([0.01, 0.0])
    nxt = closed_loop_step(m, dp, L, g, state, w, v)
    _, u = controller_step(g, dp.phi, state.xc, state.box)
    y = output_of(m, state.x, u, v)
    # replaying the framer with that (y, u) must reproduce the step's box
    from framersynth.observer import framer_step
    box = framer_step(m, dp, L, state.box, y, u)
    np.testing.assert_allclose(nxt.box.hi, box.hi, atol=1e-14)
    np.testing.assert_allclose(nxt.box.lo, box.lo, atol=1e-14)
    np.testing.assert_allclose(
        nxt.x, m.A @ state.x + m.phi(state.x) + m.B @ u + m.W @ w, atol=1e-14)


def test_run_closed_loop_contract(trig2):
    m = trig2.model
    L = np.array(trig2.L) if trig2.L is not None else np.zeros((m.n, m.l))
    dp = trig2.decomposition()
    traj = run_closed_loop(m, dp, L, g=None, horizon=30, seed=4)
    assert traj.x.shape == (31, m.n)
    assert traj.xhi.shape == (31, m.n)
    assert traj.xc.shape == (31, m.n)
    assert traj.u.shape == (30, m.m)
    assert traj.y.shape == (30, m.l)
    assert traj.w.shape == (30, m.n_w)
    assert traj.v.shape == (30, m.n_v)
    assert traj.horizon == 30
    assert traj.contained
    assert not traj.diverged
    np.testing.assert_array_equal(traj.xc, np.zeros((31, m.n)))
    np.testing.assert_array_equal(traj.u, np.zeros((30, m.m)))
    assert traj.widths().shape == (31, m.n)
    assert np.all(traj.widths() >= 0)
    zc = traj.comparison_state()
    assert zc.shape == (31, 5 * m.n)
    np.testing.assert_allclose(zc[:, :m.n], traj.xhi - traj.x, atol=1e-14)

    with pytest.raises(ValueError):
        run_closed_loop(m, dp, L, horizon=0)


def test_open_loop_equals_zero_gains(trig2):
    m = trig2.model
    dp = trig2.decomposition()
    L = 0.05 * np.ones((m.n, m.l))
    a = run_closed_loop(m, dp, L, g=None, horizon=25, seed=7)
    b = run_closed_loop(m, dp, L, g=ControllerGains.zero(m.n, m.m), horizon=25, seed=7)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.xhi, b.xhi)
    np.testing.assert_array_equal(a.xlo, b.xlo)
    np.testing.assert_array_equal(a.y, b.y)


def test_open_and_closed_share_noise(trig2):
    """Same seed means bit-identical noise realizations in both modes."""
    m = trig2.model
    dp = trig2.decomposition()
    L = 0.05 * np.ones((m.n, m.l))
    rng = np.random.default_rng(3)
    g = _rand_gains(rng, m.n, m.m, scale=0.1)
    a = run_closed_loop(m, dp, L, g=None, horizon=20, seed=11)
    b = run_closed_loop(m, dp, L, g=g, horizon=20, seed=11)
    np.testing.assert_array_equal(a.w, b.w)
    np.testing.assert_array_equal(a.v, b.v)
    np.testing.assert_array_equal(a.x[0], b.x[0])
    assert not np.array_equal(a.u, b.u)  # the inputs differ, the noise does not
    w_direct, v_direct, x0 = sample_noise(m, 20, 11, "uniform", "uniform")
    np.testing.assert_array_equal(a.w, w_direct[:20])
    np.testing.assert_array_equal(a.x[0], x0)


def test_containment_flag_and_divergence():
    """An exploding scalar loop trips the divergence stop but stays contained."""
    from framersynth.plant import SystemModel
    m = SystemModel(A=[[1.6]], B=[[1.0]], C=[[1.0]], D=[[0.0]], W=[[1.0]], V=[[1.0]],
                    w_box=IntervalVec([-0.1], [0.1]),
                    v_box=IntervalVec([-0.05], [0.05]),
                    x0_box=IntervalVec([-1.0], [1.0]))
    dp = decompose_model(m)
    traj = run_closed_loop(m, dp, np.zeros((1, 1)), horizon=500, seed=0)
    assert traj.diverged
    assert traj.contained  # the enclosure grows with the state, never loses it
    assert traj.x.shape[0] < 501
    assert traj.u.shape[0] == traj.x.shape[0] - 1


def test_error_recursion_matches_trajectory(trig2):
    """Errors defined from a rollout obey the exact error recursion."""
    m = trig2.model
    dp = trig2.decomposition()
    L = np.array([[0.05, 0.0], [0.02, 0.04]])
    rng = np.random.default_rng(9)
    g = _rand_gains(rng, m.n, m.m, scale=0.2)
    traj = run_closed_loop(m, dp, L, g=g, horizon=40, seed=2)
    e_hi = traj.xhi - traj.x
    e_lo = traj.x - traj.xlo
    for k in range(traj.u.shape[0]):
        nh, nl = closed_loop_error_step(m, dp, L, e_hi[k], e_lo[k], traj.x[k],
                                        traj.w[k], traj.v[k])
        np.testing.assert_allclose(nh, e_hi[k + 1], atol=1e-10)
        np.testing.assert_allclose(nl, e_lo[k + 1], atol=1e-10)


def test_linear_errors_are_gain_independent(linear2):
    """Different controllers, same noise: identical enclosure errors.

    The control input enters the plant and both framer bounds through the
    same B u term, so it cancels exactly from the enclosure errors whenever
    the maps are linear.  (With curvature the cancellation is only
    first-order: the remainder evaluations move with the bound positions,
    which do depend on the input.)
    """
    m = linear2.model
    dp = linear2.decomposition()
    L = np.array([[0.05], [0.02]])
    rng = np.random.default_rng(21)
    g1 = _rand_gains(rng, m.n, m.m, scale=0.2)
    g2 = _rand_gains(rng, m.n, m.m, scale=0.2)
    a = run_closed_loop(m, dp, L, g=g1, horizon=30, seed=5)
    b = run_closed_loop(m, dp, L, g=g2, horizon=30, seed=5)
    np.testing.assert_allclose(a.xhi - a.x, b.xhi - b.x, atol=1e-9)
    np.testing.assert_allclose(a.x - a.xlo, b.x - b.xlo, atol=1e-9)
    assert not np.allclose(a.x, b.x)  # trajectories themselves do differ


def test_benchmark_controller_step_hand(bench, bench_dp):
    """One update with the bundled reference gains against direct matrix math."""
    g = bench.gains
    box = IntervalVec(-np.ones(5), np.ones(5))
    xc = 0.1 * np.arange(5.0)
    xc_next, u = controller_step(g, bench_dp.phi, xc, box)
    nu = bench_dp.phi.eval_pair(box.hi, box.lo) - bench_dp.phi.eval_pair(box.lo, box.hi)
    np.testing.assert_allclose(
        u, g.Cc @ xc + g.Kd_hi @ box.hi - g.Kd_lo @ box.lo + g.Ku_nu @ nu, atol=1e-14)
    np.testing.assert_allclose(
        xc_next, g.Ac @ xc + g.Kb_hi @ box.hi - g.Kb_lo @ box.lo + g.Kx_nu @ nu, atol=1e-14)
    # spread of sin(z) - z over [-1, 1] per row, scaled by each coefficient
    spread = 2.0 * (1.0 - np.sin(1.0))
    np.testing.assert_allclose(nu, np.array([0.1, 0.2, 0.3, 0.0, 0.1]) * spread, atol=1e-14)
