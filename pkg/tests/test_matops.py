"""Elementwise splittings, spectral radius, and interval-vector basics."""

import numpy as np
import pytest

from framersynth.matops import (
    IntervalVec,
    abs_mat,
    neg_part,
    pos_part,
    sign_mat,
    spectral_radius,
)


def test_splitting_identities():
    rng = np.random.default_rng(7)
    for _ in range(20):
        M = rng.standard_normal((4, 6)) * rng.choice([0.1, 1.0, 10.0])
        P, N = pos_part(M), neg_part(M)
        assert np.all(P >= 0) and np.all(N >= 0)
        np.testing.assert_array_equal(P - N, M)
        np.testing.assert_array_equal(P + N, abs_mat(M))
        # the two parts never overlap: at most one is nonzero per entry
        assert np.all(P * N == 0)


def test_splitting_of_zero_rows():
    M = np.array([[0.0, -2.0], [3.0, 0.0]])
    np.testing.assert_array_equal(pos_part(M), [[0.0, 0.0], [3.0, 0.0]])
    np.testing.assert_array_equal(neg_part(M), [[0.0, 2.0], [0.0, 0.0]])


def test_sign_convention_at_zero():
    M = np.array([-3.0, -0.0, 0.0, 1e-300, 2.0])
    np.testing.assert_array_equal(sign_mat(M), [-1.0, 1.0, 1.0, 1.0, 1.0])


def test_spectral_radius_known_values():
    # rotation by 90 degrees: both eigenvalues on the unit circle
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    assert spectral_radius(R) == pytest.approx(1.0, abs=1e-12)
    # triangular: radius is the largest |diagonal|
    T = np.array([[0.5, 100.0], [0.0, -0.25]])
    assert spectral_radius(T) == pytest.approx(0.5, abs=1e-12)
    assert spectral_radius(np.zeros((3, 3))) == 0.0


def test_spectral_radius_edge_cases():
    assert spectral_radius(np.zeros((0, 0))) == 0.0
    with pytest.raises(ValueError):
        spectral_radius(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        spectral_radius(np.zeros(4))


def test_interval_vec_construction():
    box = IntervalVec([-1.0, 0.0], [1.0, 0.0])
    assert box.dim == 2
    np.testing.assert_array_equal(box.width(), [2.0, 0.0])
    np.testing.assert_array_equal(box.midpoint(), [0.0, 0.0])
    with pytest.raises(ValueError):
        IntervalVec([0.0, 0.0], [1.0])
    with pytest.raises(ValueError):
        IntervalVec([1.0], [0.0])
    # scalars are promoted to 1-vectors
    assert IntervalVec(-1.0, 2.0).dim == 1


def test_interval_vec_contains_with_tolerance():
    box = IntervalVec([-1.0], [1.0])
    assert box.contains([1.0])
    assert not box.contains([1.0 + 1e-9])
    assert box.contains([1.0 + 1e-9], tol=1e-8)
    assert box.contains([-1.0 - 1e-9], tol=1e-8)


def test_interval_vec_sampling():
    rng = np.random.default_rng(3)
    box = IntervalVec([-2.0, 1.0, 0.0], [2.0, 4.0, 0.0])
    for _ in range(200):
        z = box.sample(rng)
        assert box.contains(z)
    for _ in range(200):
        z = box.vertex_sample(rng)
        assert all(z[i] in (box.lo[i], box.hi[i]) for i in range(3))
    # both endpoints actually show up
    draws = np.stack([box.vertex_sample(rng) for _ in range(100)])
    assert np.any(draws[:, 0] == -2.0) and np.any(draws[:, 0] == 2.0)
