"""Shared fixtures: bundled model configs, their decompositions, and a
hand-checkable scalar rig used by the observer/controller unit tests."""

import numpy as np
import pytest

from framersynth.config import load_bundled
from framersynth.decomp import regularize_bounding
from framersynth.matops import IntervalVec
from framersynth.plant import SystemModel


@pytest.fixture(scope="session")
def bench():
    """Five-state benchmark config (unstable A, printed reference gains)."""
    return load_bundled("benchmark5")


@pytest.fixture(scope="session")
def bench_dp(bench):
    return bench.decomposition()


@pytest.fixture(scope="session")
def bench_Fphi(bench, bench_dp):
    return regularize_bounding(bench_dp.phi.F, eps0=bench.eps0, policy=bench.regularization)


@pytest.fixture(scope="session")
def scalar1():
    return load_bundled("scalar1")


@pytest.fixture(scope="session")
def linear2():
    return load_bundled("linear2")


@pytest.fixture(scope="session")
def trig2():
    return load_bundled("trig2")


@pytest.fixture(scope="session")
def toy_cfgs(scalar1, linear2, trig2):
    return {"scalar1": scalar1, "linear2": linear2, "trig2": trig2}


@pytest.fixture()
def scalar_model():
    """Purely linear scalar plant whose framer steps can be done by hand.

    A = 0.5, B = C = W = V = 1, D = 0, w in [-0.1, 0.1], v in [-0.05, 0.05],
    x0 in [-1, 1].  With L = 0.2 the closed matrix is 0.3 and one framer
    step from the box [-1, 1] at y = 0.5, u = 0 lands exactly on
    [-0.31, 0.51].
    """
    return SystemModel(
        A=[[0.5]], B=[[1.0]], C=[[1.0]], D=[[0.0]], W=[[1.0]], V=[[1.0]],
        w_box=IntervalVec([-0.1], [0.1]),
        v_box=IntervalVec([-0.05], [0.05]),
        x0_box=IntervalVec([-1.0], [1.0]),
        name="scalar-linear",
    )


def random_ordered_triple(rng, box, spread=1.0):
    """Draw z2 <= x <= z1 inside (a widened copy of) the given box."""
    lo = box.lo - spread
    hi = box.hi + spread
    a = rng.uniform(lo, hi)
    b = rng.uniform(lo, hi)
    z2 = np.minimum(a, b)
    z1 = np.maximum(a, b)
    x = z2 + rng.uniform(0.0, 1.0, size=z1.shape) * (z1 - z2)
    return z1, x, z2
