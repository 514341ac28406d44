"""Dynamic output-feedback controller driven by state enclosures.

The controller never sees the true state.  It consumes the framer bounds
(xlo, xhi) -- its "measurement" is the enclosure itself -- plus an internal
state xc, and emits

    xc+ = A_c xc + Kb_hi xhi - Kb_lo xlo + Kx_nu nu
    u   = C_c xc + Kd_hi xhi - Kd_lo xlo + Ku_nu nu

where nu = mu_phi_d(xhi, xlo) - mu_phi_d(xlo, xhi) is the spread of the
state nonlinearity's interval extension across the current enclosure, a
feedforward on how much the nonlinearity can disperse the bounds.
"""

import numpy as np

from .matops import IntervalVec, pos_part, neg_part
from .observer import framer_step
from .plant import output_of, plant_step, sample_noise

__all__ = [
    "ControllerGains",
    "ClosedLoopState",
    "ClosedLoopTrajectory",
    "controller_step",
    "closed_loop_step",
    "closed_loop_error_step",
    "run_closed_loop",
]


class ControllerGains:
    """Gain set of the enclosure-feedback controller.

    Kb_hi/Kb_lo act on the upper/lower framer bound in the state update
    (stacked, they form the bound-input matrix [-Kb_lo, Kb_hi]); Kd_hi/Kd_lo
    likewise in the output map; Kx_nu/Ku_nu weight the nonlinearity-spread
    feedforward.
    """

    FIELDS = ("Ac", "Kb_hi", "Kb_lo", "Cc", "Kd_hi", "Kd_lo", "Kx_nu", "Ku_nu")

    def __init__(self, Ac, Kb_hi, Kb_lo, Cc, Kd_hi, Kd_lo, Kx_nu, Ku_nu):
        self.Ac = np.asarray(Ac, dtype=float)
        self.Kb_hi = np.asarray(Kb_hi, dtype=float)
        self.Kb_lo = np.asarray(Kb_lo, dtype=float)
        self.Cc = np.asarray(Cc, dtype=float)
        self.Kd_hi = np.asarray(Kd_hi, dtype=float)
        self.Kd_lo = np.asarray(Kd_lo, dtype=float)
        self.Kx_nu = np.asarray(Kx_nu, dtype=float)
        self.Ku_nu = np.asarray(Ku_nu, dtype=float)
        n = self.Ac.shape[0]
        if self.Ac.shape != (n, n):
            raise ValueError("Ac must be square")
        m = self.Cc.shape[0]
        for name in ("Kb_hi", "Kb_lo", "Kx_nu"):
            if getattr(self, name).shape != (n, n):
                raise ValueError(f"{name} must be {(n, n)}")
        for name in ("Cc", "Kd_hi", "Kd_lo", "Ku_nu"):
            if getattr(self, name).shape != (m, n):
                raise ValueError(f"{name} must be {(m, n)}")
        self.n, self.m = n, m

    @classmethod
    def zero(cls, n, m):
        return cls(
            np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n)),
            np.zeros((m, n)), np.zeros((m, n)), np.zeros((m, n)),
            np.zeros((n, n)), np.zeros((m, n)),
        )

    def is_zero(self):
        return all(np.all(getattr(self, f) == 0.0) for f in self.FIELDS)

    def bound_input_matrix(self):
        """[-Kb_lo, Kb_hi] acting on the stacked bounds [xlo; xhi]."""
        return np.hstack([-self.Kb_lo, self.Kb_hi])

    def bound_output_matrix(self):
        """[-Kd_lo, Kd_hi] acting on the stacked bounds [xlo; xhi]."""
        return np.hstack([-self.Kd_lo, self.Kd_hi])

    def __repr__(self):
        return f"ControllerGains(n={self.n}, m={self.m}, zero={self.is_zero()})"


class ClosedLoopState:
    """Plant state, its enclosure, and the controller state at one instant."""

    __slots__ = ("x", "box", "xc")

    def __init__(self, x, box, xc):
        self.x = np.asarray(x, dtype=float)
        self.box = box
        self.xc = np.asarray(xc, dtype=float)


def controller_step(g, decomp_phi, xc, box):
    """One controller update; returns (xc_next, u).

    Degenerate enclosures (xhi == xlo) zero the nu feedforward because the
    interval extension collapses onto the map itself.
    """
    xc = np.asarray(xc, dtype=float)
    nu = decomp_phi.eval_pair(box.hi, box.lo) - decomp_phi.eval_pair(box.lo, box.hi)
    u = g.Cc @ xc + g.Kd_hi @ box.hi - g.Kd_lo @ box.lo + g.Ku_nu @ nu
    xc_next = g.Ac @ xc + g.Kb_hi @ box.hi - g.Kb_lo @ box.lo + g.Kx_nu @ nu
    return xc_next, u


def closed_loop_step(model, dp, L, g, state, w, v):
    """Advance plant, framer, and controller together through one step.

    Strictly causal order: the input u_k is computed from the current
    enclosure and controller state, the measurement y_k is taken under that
    input, then framer and plant advance.  The framer side therefore sees
    exactly the measurement the plant produced.
    """
    xc_next, u = controller_step(g, dp.phi, state.xc, state.box)
    y = output_of(model, state.x, u, v)
    box_next = framer_step(model, dp, L, state.box, y, u)
    x_next = plant_step(model, state.x, u, w)
    return ClosedLoopState(x_next, box_next, xc_next)


def closed_loop_error_step(model, dp, L, e_hi, e_lo, x, w, v):
    """Exact one-step recursion of the enclosure errors.

    With e_hi = xhi - x and e_lo = x - xlo both nonnegative, the framer and
    plant updates subtract to

        e_hi+ = Acl+ e_hi + Acl- e_lo + d_hi_phi + L+ d_lo_psi + L- d_hi_psi
                + W+ (w_hi - w) + W- (w - w_lo)
                + (LV)+ (v - v_lo) + (LV)- (v_hi - v)

    (and the mirrored expression for e_lo+), where d_hi_phi = mu_phi_d(xhi,
    xlo) - mu_phi(x) etc. are the one-sided extension gaps and w_hi/w_lo,
    v_hi/v_lo are the noise-box bounds.  Controller gains cancel exactly, so
    the errors evolve independently of the input; negative inputs are
    accepted and propagated as-is for diagnostic use.
    """
    e_hi = np.asarray(e_hi, dtype=float)
    e_lo = np.asarray(e_lo, dtype=float)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    L = np.asarray(L, dtype=float)
    xhi, xlo = x + e_hi, x - e_lo
    Acl = model.A + dp.phi.H - L @ (model.C + dp.psi.H)
    Ap, An = pos_part(Acl), neg_part(Acl)
    Lp, Ln = pos_part(L), neg_part(L)
    LV = L @ model.V
    LVp, LVn = pos_part(LV), neg_part(LV)
    Wp, Wn = pos_part(model.W), neg_part(model.W)
    phi_x = dp.phi.residual(x)
    psi_x = dp.psi.residual(x)
    d_hi_phi = dp.phi.eval_pair(xhi, xlo) - phi_x
    d_lo_phi = phi_x - dp.phi.eval_pair(xlo, xhi)
    d_hi_psi = dp.psi.eval_pair(xhi, xlo) - psi_x
    d_lo_psi = psi_x - dp.psi.eval_pair(xlo, xhi)
    wb, vb = model.w_box, model.v_box
    e_hi_next = (
        Ap @ e_hi + An @ e_lo + d_hi_phi + Lp @ d_lo_psi + Ln @ d_hi_psi
        + Wp @ (wb.hi - w) + Wn @ (w - wb.lo)
        + LVp @ (v - vb.lo) + LVn @ (vb.hi - v)
    )
    e_lo_next = (
        Ap @ e_lo + An @ e_hi + d_lo_phi + Lp @ d_hi_psi + Ln @ d_lo_psi
        + Wp @ (w - wb.lo) + Wn @ (wb.hi - w)
        + LVp @ (vb.hi - v) + LVn @ (v - vb.lo)
    )
    return e_hi_next, e_lo_next


class ClosedLoopTrajectory:
    """Full record of a closed-loop (or open-loop) run with framers attached."""

    def __init__(self, x, xhi, xlo, xc, u, y, w, v, contained, diverged):
        self.x = x
        self.xhi = xhi
        self.xlo = xlo
        self.xc = xc
        self.u = u
        self.y = y
        self.w = w
        self.v = v
        self.contained = bool(contained)
        self.diverged = bool(diverged)

    @property
    def horizon(self):
        return self.x.shape[0] - 1

    def widths(self):
        """Enclosure widths per step, shape (T+1, n)."""
        return self.xhi - self.xlo

    def comparison_state(self):
        """Stacked [e_hi; e_lo; xc; xhi; xlo] per step, shape (T+1, 5n)."""
        return np.hstack([self.xhi - self.x, self.x - self.xlo, self.xc, self.xhi, self.xlo])


def run_closed_loop(model, dp, L, g=None, horizon=100, seed=0, scheme="uniform",
                    x0_mode="uniform", contain_tol=1e-9, diverge_limit=1e12):
    """Roll out the interconnection for one noise realization.

    g=None (or all-zero gains) runs the open loop -- zero input, framer
    still tracking -- against the same pre-drawn noise a closed-loop run
    with the same seed would see, so open/closed comparisons share
    realizations exactly.  The run stops early once plant or bounds exceed
    diverge_limit in magnitude; containment is checked at every recorded
    step with absolute slack contain_tol.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if g is None:
        g = ControllerGains.zero(model.n, model.m)
    w_seq, v_seq, x0 = sample_noise(model, horizon, seed, scheme, x0_mode)
    state = ClosedLoopState(x0, IntervalVec(model.x0_box.lo.copy(), model.x0_box.hi.copy()), np.zeros(model.n))
    xs, his, los, xcs = [state.x], [state.box.hi], [state.box.lo], [state.xc]
    us, ys = [], []
    contained = state.box.contains(state.x, tol=contain_tol)
    diverged = False
    for k in range(horizon):
        xc_next, u = controller_step(g, dp.phi, state.xc, state.box)
        y = output_of(model, state.x, u, v_seq[k])
        box_next = framer_step(model, dp, L, state.box, y, u)
        x_next = plant_step(model, state.x, u, w_seq[k])
        state = ClosedLoopState(x_next, box_next, xc_next)
        us.append(u)
        ys.append(y)
        xs.append(state.x)
        his.append(state.box.hi)
        los.append(state.box.lo)
        xcs.append(state.xc)
        if not state.box.contains(state.x, tol=contain_tol):
            contained = False
        big = max(np.max(np.abs(state.x)), np.max(np.abs(state.box.hi)), np.max(np.abs(state.box.lo)))
        if big > diverge_limit:
            diverged = True
            break
    k_stop = len(us)
    return ClosedLoopTrajectory(
        np.stack(xs), np.stack(his), np.stack(los), np.stack(xcs),
        np.stack(us), np.stack(ys), w_seq[:k_stop], v_seq[:k_stop],
        contained, diverged,
    )
