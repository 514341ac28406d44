"""System models and ground-truth simulation.

Dynamics are discrete-time with additive slope-bounded nonlinearities in
both the state update and the measurement:

    x+ = A x + phi(x) + B u + W w
    y  = C x + psi(x) + D u + V v

with process noise w and measurement noise v confined to known boxes and
the initial state confined to a known box.
"""

import numpy as np

from .decomp import NonlinearMap
from .matops import IntervalVec

__all__ = [
    "SystemModel",
    "Trajectory",
    "plant_step",
    "output_of",
    "noise_streams",
    "sample_noise",
    "simulate",
]

_DIVERGE_LIMIT = 1e12


class SystemModel:
    """Container for the plant data.

    phi / psi may be None, in which case the identically-zero map of the
    right shape is substituted.
    """

    def __init__(self, A, B, C, D, W, V, w_box, v_box, x0_box, phi=None, psi=None, name=""):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.D = np.asarray(D, dtype=float)
        self.W = np.asarray(W, dtype=float)
        self.V = np.asarray(V, dtype=float)
        if self.A.ndim != 2 or self.A.shape[0] != self.A.shape[1]:
            raise ValueError("A must be square")
        n = self.A.shape[0]
        if self.B.shape[0] != n:
            raise ValueError("B row count must match A")
        m = self.B.shape[1]
        if self.C.shape[1] != n:
            raise ValueError("C column count must match A")
        l = self.C.shape[0]
        if self.D.shape != (l, m):
            raise ValueError(f"D must be {(l, m)}, got {self.D.shape}")
        if self.W.shape[0] != n:
            raise ValueError("W row count must match A")
        if self.V.shape[0] != l:
            raise ValueError("V row count must match C")
        self.n, self.m, self.l = n, m, l
        self.n_w = self.W.shape[1]
        self.n_v = self.V.shape[1]
        self.phi = phi if phi is not None else NonlinearMap.zero(n, n)
        self.psi = psi if psi is not None else NonlinearMap.zero(n, l)
        if (self.phi.n_in, self.phi.n_out) != (n, n):
            raise ValueError("phi must map R^n -> R^n")
        if (self.psi.n_in, self.psi.n_out) != (n, l):
            raise ValueError("psi must map R^n -> R^l")
        self.w_box = w_box if isinstance(w_box, IntervalVec) else IntervalVec(*w_box)
        self.v_box = v_box if isinstance(v_box, IntervalVec) else IntervalVec(*v_box)
        self.x0_box = x0_box if isinstance(x0_box, IntervalVec) else IntervalVec(*x0_box)
        if self.w_box.dim != self.n_w:
            raise ValueError("w_box dimension must match W column count")
        if self.v_box.dim != self.n_v:
            raise ValueError("v_box dimension must match V column count")
        if self.x0_box.dim != n:
            raise ValueError("x0_box dimension must match state dimension")
        self.name = name

    def __repr__(self):
        return f"SystemModel(name={self.name!r}, n={self.n}, m={self.m}, l={self.l})"


class Trajectory:
    """Recorded run: states x[0..T], inputs u[0..T-1], outputs y[0..T], noises."""

    def __init__(self, x, u, y, w, v, diverged=False):
        self.x = np.asarray(x, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.w = np.asarray(w, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.diverged = bool(diverged)

    @property
    def horizon(self):
        return self.x.shape[0] - 1


def plant_step(model, x, u, w):
    """One state update x+ = A x + phi(x) + B u + W w."""
    x = np.asarray(x, dtype=float)
    return model.A @ x + model.phi(x) + model.B @ np.asarray(u, dtype=float) + model.W @ np.asarray(w, dtype=float)


def output_of(model, x, u, v):
    """Measurement y = C x + psi(x) + D u + V v."""
    x = np.asarray(x, dtype=float)
    return model.C @ x + model.psi(x) + model.D @ np.asarray(u, dtype=float) + model.V @ np.asarray(v, dtype=float)


def noise_streams(seed):
    """Three independent generators (process, measurement, initial state) from one seed.

    Splitting the seed once here means open- and closed-loop runs that share
    a seed see bit-identical noise realizations.
    """
    ss = np.random.SeedSequence(seed)
    kids = ss.spawn(3)
    return tuple(np.random.default_rng(k) for k in kids)


def _draw(box, rng, scheme):
    if scheme == "uniform":
        return box.sample(rng)
    if scheme == "vertex":
        return box.vertex_sample(rng)
    if scheme == "midpoint":
        return box.midpoint()
    raise ValueError(f"unknown noise scheme {scheme!r}")


def sample_noise(model, horizon, seed, scheme="uniform", x0_mode="midpoint"):
    """Pre-draw the full noise realization for a run of the given horizon.

    Returns (w_seq, v_seq, x0) with w_seq of shape (horizon, n_w), v_seq of
    shape (horizon + 1, n_v) (one measurement per recorded state), and the
    initial state x0.  x0_mode is "midpoint", "uniform", or an explicit
    vector.
    """
    rng_w, rng_v, rng_x0 = noise_streams(seed)
    w_seq = np.stack([_draw(model.w_box, rng_w, scheme) for _ in range(horizon)]) if horizon else np.zeros((0, model.n_w))
    v_seq = np.stack([_draw(model.v_box, rng_v, scheme) for _ in range(horizon + 1)])
    if isinstance(x0_mode, str):
        if x0_mode == "midpoint":
            x0 = model.x0_box.midpoint()
        elif x0_mode == "uniform":
            x0 = model.x0_box.sample(rng_x0)
        else:
            raise ValueError(f"unknown x0 mode {x0_mode!r}")
    else:
        x0 = np.asarray(x0_mode, dtype=float)
        if not model.x0_box.contains(x0, tol=1e-12):
            raise ValueError("explicit x0 lies outside the initial-state box")
    return w_seq, v_seq, x0


def simulate(model, horizon, seed=0, scheme="uniform", x0_mode="midpoint", policy=None):
    """Open-loop (or state-feedback) rollout of the plant.

    policy, if given, is called as policy(k, x_k) and must return the input
    vector u_k; otherwise the input is zero.  The run stops early and is
    flagged as diverged once any state magnitude exceeds 1e12.
    """
    w_seq, v_seq, x0 = sample_noise(model, horizon, seed, scheme)
    xs = [x0]
    us, ys = [], []
    diverged = False
    x = x0
    for k in range(horizon):
        u = np.zeros(model.m) if policy is None else np.asarray(policy(k, x), dtype=float)
        ys.append(output_of(model, x, u, v_seq[k]))
        us.append(u)
        x = plant_step(model, x, u, w_seq[k])
        xs.append(x)
        if np.any(np.abs(x) > _DIVERGE_LIMIT):
            diverged = True
            break
    k_stop = len(us)
    u_last = np.zeros(model.m) if policy is None else np.asarray(policy(k_stop, x), dtype=float)
    ys.append(output_of(model, xs[-1], u_last, v_seq[k_stop]))
    return Trajectory(
        np.stack(xs),
        np.stack(us) if us else np.zeros((0, model.m)),
        np.stack(ys),
        w_seq[:k_stop],
        v_seq[: k_stop + 1],
        diverged,
    )
