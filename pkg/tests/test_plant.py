"""Plant container validation, noise generation, and ground-truth rollouts."""

import numpy as np
import pytest

from framersynth.decomp import NonlinearMap, Term
from framersynth.matops import IntervalVec
from framersynth.plant import (
    SystemModel,
    noise_streams,
    output_of,
    plant_step,
    sample_noise,
    simulate,
)


def _boxes(n, n_w, n_v):
    return dict(
        w_box=IntervalVec(-0.1 * np.ones(n_w), 0.1 * np.ones(n_w)),
        v_box=IntervalVec(-0.05 * np.ones(n_v), 0.05 * np.ones(n_v)),
        x0_box=IntervalVec(-np.ones(n), np.ones(n)),
    )


def test_model_shape_validation():
    ok = dict(A=np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)), D=np.zeros((1, 1)),
              W=np.eye(2), V=np.eye(1), **_boxes(2, 2, 1))
    SystemModel(**ok)

    for key, bad in [
        ("A", np.ones((2, 3))),
        ("B", np.ones((3, 1))),
        ("C", np.ones((1, 3))),
        ("D", np.zeros((2, 2))),
        ("W", np.eye(3)),
        ("V", np.eye(2)),
    ]:
        kw = dict(ok)
        kw[key] = bad
        with pytest.raises(ValueError):
            SystemModel(**kw)

    kw = dict(ok)
    kw["x0_box"] = IntervalVec([-1.0], [1.0])
    with pytest.raises(ValueError):
        SystemModel(**kw)

    kw = dict(ok)
    kw["phi"] = NonlinearMap.zero(2, 1)  # wrong output dimension
    with pytest.raises(ValueError):
        SystemModel(**kw)


def test_default_nonlinearities_are_zero():
    m = SystemModel(A=np.eye(2), B=np.ones((2, 1)), C=np.ones((1, 2)),
                    D=np.zeros((1, 1)), W=np.eye(2), V=np.eye(1), **_boxes(2, 2, 1))
    np.testing.assert_array_equal(m.phi([3.0, -1.0]), [0.0, 0.0])
    np.testing.assert_array_equal(m.psi([3.0, -1.0]), [0.0])
    assert (m.n, m.m, m.l, m.n_w, m.n_v) == (2, 1, 1, 2, 1)


def test_step_and_output_by_hand(scalar_model):
    # x+ = 0.5 x + u + w;  y = x + v
    x = plant_step(scalar_model, [2.0], [0.25], [0.1])
    np.testing.assert_allclose(x, [1.35])
    y = output_of(scalar_model, [2.0], [0.25], [-0.05])
    np.testing.assert_allclose(y, [1.95])


def test_step_with_nonlinearity():
    phi = NonlinearMap(1, 1, rows=[[Term("sin", 0.1, 0)]])
    psi = NonlinearMap(1, 1, rows=[[Term("cos", 0.2, 0)]])
    m = SystemModel(A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.3]], W=[[1.0]], V=[[1.0]],
                    phi=phi, psi=psi, **_boxes(1, 1, 1))
    np.testing.assert_allclose(
        plant_step(m, [2.0], [0.0], [0.0]), [1.0 + 0.1 * np.sin(2.0)])
    np.testing.assert_allclose(
        output_of(m, [2.0], [1.0], [0.0]), [2.0 + 0.2 * np.cos(2.0) + 0.3])


def test_noise_streams_deterministic_and_independent():
    a1, b1, c1 = noise_streams(42)
    a2, b2, c2 = noise_streams(42)
    np.testing.assert_array_equal(a1.uniform(size=5), a2.uniform(size=5))
    np.testing.assert_array_equal(b1.uniform(size=5), b2.uniform(size=5))
    np.testing.assert_array_equal(c1.uniform(size=5), c2.uniform(size=5))
    # different streams from the same seed do not repeat each other
    a3, b3, _ = noise_streams(42)
    assert not np.allclose(a3.uniform(size=5), b3.uniform(size=5))


def test_sample_noise_shapes_and_schemes(scalar_model):
    w, v, x0 = sample_noise(scalar_model, 10, seed=1)
    assert w.shape == (10, 1)
    assert v.shape == (11, 1)  # one measurement per recorded state
    assert scalar_model.x0_box.contains(x0)

    w, v, x0 = sample_noise(scalar_model, 5, seed=2, scheme="vertex")
    assert set(np.unique(w)) <= {-0.1, 0.1}
    assert set(np.unique(v)) <= {-0.05, 0.05}

    w, v, x0 = sample_noise(scalar_model, 5, seed=3, scheme="midpoint")
    np.testing.assert_array_equal(w, np.zeros((5, 1)))
    np.testing.assert_array_equal(x0, [0.0])  # default x0 mode is midpoint

    with pytest.raises(ValueError):
        sample_noise(scalar_model, 5, seed=0, scheme="gaussian")


def test_sample_noise_x0_modes(scalar_model):
    _, _, x0 = sample_noise(scalar_model, 1, seed=9, x0_mode="uniform")
    assert scalar_model.x0_box.contains(x0)
    _, _, x0 = sample_noise(scalar_model, 1, seed=9, x0_mode=[0.25])
    np.testing.assert_array_equal(x0, [0.25])
    with pytest.raises(ValueError):
        sample_noise(scalar_model, 1, seed=9, x0_mode=[2.0])  # outside the box
    with pytest.raises(ValueError):
        sample_noise(scalar_model, 1, seed=9, x0_mode="corner")


def test_sample_noise_is_seed_stable(scalar_model):
    w1, v1, x1 = sample_noise(scalar_model, 8, seed=5, x0_mode="uniform")
    w2, v2, x2 = sample_noise(scalar_model, 8, seed=5, x0_mode="uniform")
    np.testing.assert_array_equal(w1, w2)
    np.testing.assert_array_equal(v1, v2)
    np.testing.assert_array_equal(x1, x2)
    w3, _, _ = sample_noise(scalar_model, 8, seed=6, x0_mode="uniform")
    assert not np.array_equal(w1, w3)


def test_simulate_shapes(scalar_model):
    traj = simulate(scalar_model, horizon=20, seed=0)
    assert traj.x.shape == (21, 1)
    assert traj.u.shape == (20, 1)
    assert traj.y.shape == (21, 1)  # terminal measurement included
    assert traj.w.shape == (20, 1)
    assert traj.v.shape == (21, 1)
    assert traj.horizon == 20
    assert not traj.diverged
    np.testing.assert_array_equal(traj.u, np.zeros((20, 1)))


def test_simulate_replays_its_own_noise(scalar_model):
    traj = simulate(scalar_model, horizon=15, seed=3, x0_mode="uniform")
    x = traj.x[0]
    for k in range(15):
        np.testing.assert_allclose(traj.y[k], output_of(scalar_model, x, traj.u[k], traj.v[k]), atol=1e-14)
        x = plant_step(scalar_model, x, traj.u[k], traj.w[k])
        np.testing.assert_allclose(traj.x[k + 1], x, atol=1e-14)


def test_simulate_policy_feedback(scalar_model):
    # u = -0.5 x cancels the dynamics down to pure noise
    traj = simulate(scalar_model, horizon=10, seed=1, scheme="midpoint",
                    x0_mode=[1.0], policy=lambda k, x: -0.5 * x)
    np.testing.assert_allclose(traj.x[1:], np.zeros((10, 1)), atol=1e-14)


def test_simulate_divergence_stops_early():
    m = SystemModel(A=[[2.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], W=[[1.0]], V=[[1.0]],
                    **_boxes(1, 1, 1))
    traj = simulate(m, horizon=200, seed=0, x0_mode=[1.0])
    assert traj.diverged
    assert traj.x.shape[0] < 201
    assert np.max(np.abs(traj.x)) > 1e12
    # arrays stay mutually consistent after the early stop
    assert traj.u.shape[0] == traj.x.shape[0] - 1
    assert traj.y.shape[0] == traj.x.shape[0]
    assert traj.v.shape[0] == traj.x.shape[0]
