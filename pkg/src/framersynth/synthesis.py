"""Comparison-system assembly, gain synthesis SDP, and certification.

The closed loop of plant, framer, and enclosure-feedback controller is
bounded by a linear comparison model in the stacked coordinate

    z = [e_hi; e_lo; xc; xhi; xlo]   (dimension 5n)

driven by the augmented disturbance

    eta = [w_box_hi; w_box_lo; w; v_box_hi; v_box_lo; v]   (dimension ntilde)

via z+ <= Atilde(g) z + nonlinear part + Lambda eta, where every
gain-dependent entry of Atilde is affine in the stacked gain matrix.  That
affinity is what makes convex synthesis possible: with Ahat = Atilde(0) and
a constant selector Bhat,

    Atilde(g) = Ahat + Bhat @ diag5(Ktilde(g))        (defining identity)

and the synthesis SDP searches a common certificate over (mu, Gamma, Q,
Theta) with Theta standing in for Q @ diag5(Ktilde)^T.
"""

import numpy as np

from .controller import ControllerGains
from .decomp import regularize_bounding
from .matops import abs_mat, neg_part, pos_part, spectral_radius
from .observer import decompose_model, search_observer_gain, verify_observer_gain
from .sdp import ConicProgram, LmiSpec, Var, solve_conic

__all__ = [
    "ComparisonSystem",
    "build_comparison",
    "SdpProblem",
    "SdpSolution",
    "assemble_sdp",
    "solve_sdp",
    "recover_gains",
    "verify_certified_gains",
    "attenuation_check",
    "certify_gains",
    "SynthesisResult",
    "synthesize",
]

PSD_MARGIN = 1e-7
RESIDUAL_TOL = 1e-6
REPLICA_TOL = 1e-6


class ComparisonSystem:
    """Comparison model data for a fixed observer gain.

    Fields: A_tilde (at the gains given to build_comparison), A_hat (zero
    gains), B_hat (gain selector), Lambda (disturbance map), F_phi / F_psi
    (spread matrices, F_phi regularized), gain_layout (stacked slot heights
    [n,n,n,m,m,m,n,m] for [Ac; Kb_hi; Kb_lo; Cc; Kd_hi; Kd_lo;
    Kx_nu@F_phi; Ku_nu@F_phi]).
    """

    def __init__(self, model, dp, L, F_phi, F_psi):
        self.model = model
        self.dp = dp
        self.L = np.asarray(L, dtype=float)
        self.F_phi = np.asarray(F_phi, dtype=float)
        self.F_psi = np.asarray(F_psi, dtype=float)
        n, m = model.n, model.m
        self.n, self.m = n, m
        self.dim = 5 * n
        self.gain_layout = [n, n, n, m, m, m, n, m]
        self.h = sum(self.gain_layout)
        self.ntilde = 3 * (model.n_w + model.n_v)
        self.A_hat = self.atilde_of(ControllerGains.zero(n, m))
        self.B_hat = self._build_bhat()
        self.Lambda = self._build_lambda()
        self.A_tilde = None  # set by build_comparison

    # -- block constructions -------------------------------------------------

    def _pieces(self):
        model, dp, L = self.model, self.dp, self.L
        Ceff = model.C + dp.psi.H
        Acl = model.A + dp.phi.H - L @ Ceff
        return Ceff, pos_part(Acl), neg_part(Acl), abs_mat(L) @ self.F_psi

    def atilde_of(self, g):
        """Materialize the comparison matrix for a concrete gain set."""
        model = self.model
        n = self.n
        Ceff, P1, P2, S = self._pieces()
        F = self.F_phi
        B, L = model.B, self.L
        LC = L @ Ceff
        BKu = B @ g.Ku_nu @ F
        Z = np.zeros((n, n))
        rows = [
            [P1 + F + S, P2 + F + S, Z, Z, Z],
            [P2 + F - S, P1 + F - S, Z, Z, Z],
            [Z, Z, g.Ac, g.Kb_hi + g.Kx_nu @ F, -(g.Kb_lo + g.Kx_nu @ F)],
            [-LC + S + BKu, S + BKu, B @ g.Cc, P1 + B @ g.Kd_hi + LC, -(P2 + B @ g.Kd_lo)],
            [-S + BKu, LC - S + BKu, B @ g.Cc, -P2 + B @ g.Kd_hi, P1 - B @ g.Kd_lo + LC],
        ]
        return np.block(rows)

    def _build_lambda(self):
        model = self.model
        Wp, Wn = pos_part(model.W), neg_part(model.W)
        LV = self.L @ model.V
        LVp, LVn = pos_part(LV), neg_part(LV)
        W = model.W
        Zw = np.zeros_like(W)
        Zv = np.zeros_like(LV)
        rows = [
            [Wp, -Wn, -W, LVn, -LVp, LV],
            [Wn, -Wp, W, LVp, -LVn, -LV],
            [Zw, Zw, Zw, Zv, Zv, Zv],
            [Wp, -Wn, Zw, LVn, -LVp, LV],
            [-Wn, Wp, Zw, -LVp, LVn, LV],
        ]
        return np.block(rows)

    def _build_bhat(self):
        n, m, h = self.n, self.m, self.h
        off = np.concatenate([[0], np.cumsum(self.gain_layout)])
        B = self.model.B
        I = np.eye(n)
        Bhat = np.zeros((5 * n, 5 * h))

        def put(bi, bj, slot, M):
            r = bi * n
            c = bj * h + off[slot]
            Bhat[r:r + n, c:c + self.gain_layout[slot]] += M

        put(2, 2, 0, I)            # controller state matrix
        put(2, 3, 1, I)            # upper-bound input gain
        put(2, 3, 6, I)            # spread feedforward into xc, upper column
        put(2, 4, 2, -I)           # lower-bound input gain
        put(2, 4, 6, -I)           # spread feedforward into xc, lower column
        for bi in (3, 4):
            put(bi, 0, 7, B)       # input spread feedforward into both bounds
            put(bi, 1, 7, B)
            put(bi, 2, 3, B)       # controller output matrix
            put(bi, 3, 4, B)       # upper-bound output gain
            put(bi, 4, 5, -B)      # lower-bound output gain
        return Bhat

    # -- gain stacking -------------------------------------------------------

    def ktilde_of(self, g):
        """Stacked gain matrix (h x n) in slot order, nu-gains folded with F_phi."""
        return np.vstack([
            g.Ac, g.Kb_hi, g.Kb_lo, g.Cc, g.Kd_hi, g.Kd_lo,
            g.Kx_nu @ self.F_phi, g.Ku_nu @ self.F_phi,
        ])

    def diag5_ktilde(self, g):
        K = self.ktilde_of(g)
        out = np.zeros((5 * self.h, 5 * self.n))
        for r in range(5):
            out[r * self.h:(r + 1) * self.h, r * self.n:(r + 1) * self.n] = K
        return out

    def split_ktilde(self, K):
        """Inverse of ktilde_of: slot matrices -> ControllerGains (un-folding F_phi)."""
        off = np.concatenate([[0], np.cumsum(self.gain_layout)])
        slots = [K[off[i]:off[i + 1]] for i in range(8)]
        Finv = np.linalg.inv(self.F_phi)
        return ControllerGains(
            slots[0], slots[1], slots[2], slots[3], slots[4], slots[5],
            slots[6] @ Finv, slots[7] @ Finv,
        )

    # -- signal evaluators ---------------------------------------------------

    def lam(self, z):
        """Nonlinear part of the comparison dynamics at stacked state z."""
        n = self.n
        z = np.asarray(z, dtype=float)
        xhi, xlo = z[3 * n:4 * n], z[4 * n:5 * n]
        up = self.dp.phi.eval_pair(xhi, xlo)
        dn = self.dp.phi.eval_pair(xlo, xhi)
        return np.concatenate([np.zeros(3 * n), up, dn])

    def eta_of(self, w, v):
        """Augmented disturbance vector for realized noises (w, v)."""
        model = self.model
        return np.concatenate([
            model.w_box.hi, model.w_box.lo, np.asarray(w, dtype=float),
            model.v_box.hi, model.v_box.lo, np.asarray(v, dtype=float),
        ])

    def check_identity(self, g, tol=1e-9):
        """Defining-identity residual for a concrete gain set."""
        lhs = self.atilde_of(g)
        rhs = self.A_hat + self.B_hat @ self.diag5_ktilde(g)
        return float(np.max(np.abs(lhs - rhs)))


def build_comparison(model, dp, L, g=None, eps0=1e-3, reg_policy="only_if_singular", F_phi=None, F_psi=None):
    """Construct the comparison system for (model, decompositions, observer gain).

    The state-nonlinearity spread matrix is regularized (so it is invertible
    and the nu-gain folding is reversible) unless an explicit F_phi is
    supplied.  The defining identity is self-checked on the given gains plus
    a deterministic pseudo-random draw; failure indicates an internal
    construction inconsistency and raises.
    """
    if F_phi is None:
        F_phi = regularize_bounding(dp.phi.F, eps0=eps0, policy=reg_policy)
    if np.linalg.matrix_rank(F_phi) < model.n:
        raise ValueError("state spread matrix must be invertible; regularize it")
    if F_psi is None:
        F_psi = dp.psi.F
    cs = ComparisonSystem(model, dp, L, F_phi, F_psi)
    if g is None:
        g = ControllerGains.zero(model.n, model.m)
    cs.A_tilde = cs.atilde_of(g)
    rng = np.random.default_rng(12345)
    probe = ControllerGains(*[rng.standard_normal(s) for s in [
        (model.n, model.n)] * 3 + [(model.m, model.n)] * 3 + [(model.n, model.n), (model.m, model.n)]])
    worst = max(cs.check_identity(g), cs.check_identity(probe))
    if worst > 1e-8:
        raise AssertionError(f"comparison construction inconsistent: identity residual {worst:.3e}")
    return cs


class SdpProblem:
    """Assembled synthesis SDP: minimize mu over (mu, Gamma, Q, Theta)."""

    def __init__(self, cs, alpha, gamma, epsilon, prog, structure):
        self.cs = cs
        self.alpha = float(alpha)
        self.gamma = float(gamma)
        self.epsilon = float(epsilon)
        self.prog = prog
        self.structure = structure

    @property
    def dims(self):
        d = self.cs.dim
        return {"stability": 4 * d, "attenuation": self.cs.ntilde + 2 * d, "coupling": 2 * d}


def assemble_sdp(cs, alpha, gamma, structure="free", margin=PSD_MARGIN):
    """Build the three-LMI synthesis program.

    Constraints over (mu, Gamma, Q, Theta), all blocks sized in multiples of
    d = 5n:

      stability   (4d x 4d):  [Gamma-Q,  Q,      Q Ahat^T + Theta Bhat^T, 0
                               *,        -alpha I, 0,                     0
                               *,        0,      -Q/2,                    Q
                               0,        0,      *,                       Q - 2 eps Gamma]  < 0
      attenuation ((ntilde+2d) x ...):  [-mu I, Lambda^T, Lambda^T
                                         *,     -Q/2,     0
                                         *,     0,        -Gamma]  < 0
      coupling    (2d x 2d):  [I, Q; Q, Gamma]  >= 0   (Schur form of Gamma >= Q^2)

    epsilon = 1/(alpha gamma^2) - 1 must be positive, i.e. alpha gamma^2 < 1.
    structure:
      "free"       -- Theta dense;
      "pinned"     -- Theta entries outside the block-diagonal replica
                      support equality-pinned to zero;
      "replicated" -- Theta and Q constrained to shared 5-fold block-diagonal
                      replicas (Gamma stays free).
    """
    alpha = float(alpha)
    gamma = float(gamma)
    if alpha <= 0:
        raise ValueError("decay parameter alpha must be positive")
    if gamma <= 0:
        raise ValueError("spread norm gamma must be positive")
    if alpha * gamma * gamma >= 1.0:
        raise ValueError(
            f"need alpha * gamma^2 < 1 for a positive epsilon; got alpha={alpha}, gamma={gamma}"
        )
    epsilon = 1.0 / (alpha * gamma * gamma) - 1.0
    d, h = cs.dim, cs.h
    prog = ConicProgram()
    prog.add_var(Var("mu", "scalar", 1))
    prog.add_var(Var("Gamma", "sym", d))
    if structure == "replicated":
        prog.add_var(Var("Q", "sym", cs.n, replicas=5))
        prog.add_var(Var("Theta", "full", cs.n, cs.h, replicas=5))
    elif structure in ("free", "pinned"):
        prog.add_var(Var("Q", "sym", d))
        prog.add_var(Var("Theta", "full", d, 5 * h))
    else:
        raise ValueError(f"unknown structure {structure!r}")
    prog.minimize("mu")

    Id = np.eye(d)
    stab = LmiSpec("stability", [d, d, d, d], sense="nsd", margin=margin)
    stab.term(0, 0, "Gamma").term(0, 0, "Q", coef=-1.0)
    stab.term(0, 1, "Q")
    stab.term(0, 2, "Q", R=cs.A_hat.T).term(0, 2, "Theta", R=cs.B_hat.T)
    stab.const(1, 1, -alpha * Id)
    stab.term(2, 2, "Q", coef=-0.5)
    stab.term(2, 3, "Q")
    stab.term(3, 3, "Q").term(3, 3, "Gamma", coef=-2.0 * epsilon)
    prog.add_lmi(stab)

    att = LmiSpec("attenuation", [cs.ntilde, d, d], sense="nsd", margin=margin)
    att.scal(0, 0, "mu", -np.eye(cs.ntilde))
    att.const(0, 1, cs.Lambda.T)
    att.const(0, 2, cs.Lambda.T)
    att.term(1, 1, "Q", coef=-0.5)
    att.term(2, 2, "Gamma", coef=-1.0)
    prog.add_lmi(att)

    coup = LmiSpec("coupling", [d, d], sense="psd", margin=0.0)
    coup.const(0, 0, Id)
    coup.term(0, 1, "Q")
    coup.term(1, 1, "Gamma")
    prog.add_lmi(coup)

    if structure == "pinned":
        theta = prog.vars["Theta"]
        pins = []
        for i in range(d):
            for j in range(5 * h):
                if i // cs.n != j // h:
                    pins.append(i * 5 * h + j)
        prog.pin_zero("Theta", pins)
    return SdpProblem(cs, alpha, gamma, epsilon, prog, structure)


class SdpSolution:
    """Solver outcome plus independently recomputed certificates."""

    def __init__(self, status, solver=None, mu_star=None, Gamma=None, Q=None, Theta=None,
                 residuals=None, info=None):
        self.status = status
        self.solver = solver
        self.mu_star = mu_star
        self.Gamma = Gamma
        self.Q = Q
        self.Theta = Theta
        self.residuals = residuals or {}
        self.info = info or {}
        self.gains = None

    @property
    def feasible(self):
        return self.status in ("optimal", "optimal_inaccurate")

    def residuals_ok(self, tol=RESIDUAL_TOL):
        return bool(self.residuals) and all(r <= tol for r in self.residuals.values())

    def __repr__(self):
        return f"SdpSolution(status={self.status!r}, mu_star={self.mu_star!r})"


def solve_sdp(p, solver=None, verbose=False):
    """Solve the assembled program and attach independent residuals.

    Statuses are surfaced as-is ("infeasible", "unbounded", "numeric_error",
    "optimal", "optimal_inaccurate").  For any status that carries a primal
    point, every LMI is re-evaluated numerically (structural assembly +
    eigensolve, no solver data reused) and the worst eigenvalue per block is
    attached; an "optimal_inaccurate" point whose residuals still pass the
    acceptance tolerance is as good as optimal for downstream use.
    """
    raw = solve_conic(p.prog, solver=solver, verbose=verbose)
    sol = SdpSolution(raw["status"], solver=raw.get("solver"))
    if raw["x"] is None:
        return sol
    vals = p.prog.values_from(raw["x"])
    sol.mu_star = float(vals["mu"])
    sol.Gamma = vals["Gamma"]
    sol.Q = vals["Q"]
    sol.Theta = vals["Theta"]
    sol.residuals = p.prog.evaluate_residuals(vals)
    sol.info["min_eig_Q"] = float(np.linalg.eigvalsh(sol.Q)[0])
    sol.info["min_eig_Gamma"] = float(np.linalg.eigvalsh(sol.Gamma)[0])
    sol.info["coupling_gap_min_eig"] = float(np.linalg.eigvalsh(sol.Gamma - sol.Q @ sol.Q)[0])
    return sol


def recover_gains(sol, cs, F_phi=None):
    """Extract controller gains from a solved (Q, Theta) pair.

    Computes X = (Q^{-1} Theta)^T, averages its five diagonal replicas into
    one stacked gain matrix, splits by slot layout, and unfolds the two
    nu-slots through F_phi^{-1}.  Replica deviation (max absolute difference
    of any replica from the mean) and the Theta round-trip residual are
    recorded in sol.info; a deviation above tolerance means the solver's
    optimum was not block-replicated and the caller may re-solve with a
    stricter structure.
    """
    if sol.Q is None or sol.Theta is None:
        raise ValueError("solution carries no primal point")
    if F_phi is not None and np.max(np.abs(np.asarray(F_phi) - cs.F_phi)) > 0:
        cs = ComparisonSystem(cs.model, cs.dp, cs.L, np.asarray(F_phi, dtype=float), cs.F_psi)
    n, h = cs.n, cs.h
    X = np.linalg.solve(sol.Q, sol.Theta).T
    replicas = [X[r * h:(r + 1) * h, r * n:(r + 1) * n] for r in range(5)]
    K = sum(replicas) / 5.0
    deviation = max(float(np.max(np.abs(R - K))) for R in replicas)
    off_support = X.copy()
    for r in range(5):
        off_support[r * h:(r + 1) * h, r * n:(r + 1) * n] = 0.0
    gains = cs.split_ktilde(K)
    sol.info["replica_deviation"] = deviation
    sol.info["off_support_mass"] = float(np.max(np.abs(off_support)))
    sol.info["theta_round_trip"] = float(
        np.max(np.abs(sol.Theta - sol.Q @ cs.diag5_ktilde(gains).T))
    )
    sol.gains = gains
    return gains


def _proof_state_lmi(Atilde, P, alpha, epsilon):
    d = Atilde.shape[0]
    Id = np.eye(d)
    Z = np.zeros((d, d))
    return np.block([
        [Id - P, Id, Atilde.T @ P, Z],
        [Id, -alpha * Id, Z, Z],
        [P @ Atilde, Z, -0.5 * P, P],
        [Z, Z, P, P - 2.0 * epsilon * Id],
    ])


def _proof_atten_lmi(Lam, P, mu):
    d = P.shape[0]
    nt = Lam.shape[1]
    return np.block([
        [-mu * np.eye(nt), Lam.T @ P, Lam.T @ P],
        [P @ Lam, -0.5 * P, np.zeros((d, d))],
        [P @ Lam, np.zeros((d, d)), -np.eye(d)],
    ])


def verify_certified_gains(model, dp, L, g, P, mu, alpha, epsilon, F_phi=None, F_psi=None, tol=RESIDUAL_TOL):
    """Check the pre-transformation certificate pair at P (the inverse of Q).

    Rebuilds the comparison system from scratch for the given gains and
    evaluates the two certificate LMIs

        [I-P, I, At^T P, 0; *, -a I, 0, 0; *, *, -P/2, P; *, *, *, P-2e I] < 0
        [-mu I, Lt^T P, Lt^T P; *, -P/2, 0; *, *, -I] < 0

    reporting max eigenvalues and the joint verdict.
    """
    P = np.asarray(P, dtype=float)
    cs = build_comparison(model, dp, L, g=g, F_phi=F_phi, F_psi=F_psi)
    eig_p = float(np.linalg.eigvalsh(P)[0])
    e_state = float(np.linalg.eigvalsh(_proof_state_lmi(cs.A_tilde, P, alpha, epsilon))[-1])
    e_atten = float(np.linalg.eigvalsh(_proof_atten_lmi(cs.Lambda, P, mu))[-1])
    return {
        "min_eig_P": eig_p,
        "eig_state": e_state,
        "eig_atten": e_atten,
        "mu": float(mu),
        "alpha": float(alpha),
        "epsilon": float(epsilon),
        "certified": bool(eig_p > 0 and e_state <= tol and e_atten <= tol),
        "rho_A_tilde": spectral_radius(cs.A_tilde),
    }


def attenuation_check(z_traj, eta_traj, mu_star):
    """Empirical disturbance-gain report along recorded trajectories.

    Two readings are computed and neither is asserted: the worst per-step
    ratio ||z_k||^2 / ||eta_k||^2, and the cumulative signal-norm ratio
    sum ||z_k||^2 / sum ||eta_k||^2.  Steps with zero disturbance are
    skipped in the per-step reading.
    """
    z = np.asarray(z_traj, dtype=float)
    eta = np.asarray(eta_traj, dtype=float)
    T = min(z.shape[0], eta.shape[0])
    z, eta = z[:T], eta[:T]
    z2 = np.sum(z * z, axis=1)
    e2 = np.sum(eta * eta, axis=1)
    mask = e2 > 0
    step_ratios = z2[mask] / e2[mask]
    max_step = float(np.max(step_ratios)) if step_ratios.size else 0.0
    total_e = float(np.sum(e2))
    l2_ratio = float(np.sum(z2) / total_e) if total_e > 0 else 0.0
    return {
        "max_step_ratio": max_step,
        "l2_ratio": l2_ratio,
        "mu_star": float(mu_star),
        "within_step": bool(max_step <= mu_star),
        "within_l2": bool(l2_ratio <= mu_star),
        "steps": int(T),
    }


def certify_gains(cs, g, alpha, epsilon, solver=None, margin=PSD_MARGIN, verbose=False):
    """Search a certificate (P, mu) for fixed gains by a linear SDP.

    At fixed Atilde(g) the two proof LMIs are affine in (P, mu), so
    minimizing mu over them is convex.  On success returns a dict with the
    certificate and the induced synthesis-variable tuple Q = P^{-1},
    Gamma = Q^2, Theta = Q diag5(Ktilde)^T, which satisfies all three
    synthesis LMIs simultaneously (the proof LMIs are congruent to the
    stability/attenuation blocks under conjugation by Q at Gamma = Q^2, and
    the coupling block is then tight).
    """
    Atilde = cs.atilde_of(g)
    d = cs.dim
    prog = ConicProgram()
    prog.add_var(Var("mu", "scalar", 1))
    prog.add_var(Var("P", "sym", d))
    prog.minimize("mu")
    Id = np.eye(d)
    Z = np.zeros((d, d))
    state = LmiSpec("cert_state", [d, d, d, d], sense="nsd", margin=margin)
    state.const(0, 0, Id).term(0, 0, "P", coef=-1.0)
    state.const(0, 1, Id)
    state.term(0, 2, "P", L=Atilde.T)
    state.const(1, 1, -alpha * Id)
    state.term(2, 2, "P", coef=-0.5)
    state.term(2, 3, "P")
    state.term(3, 3, "P").const(3, 3, -2.0 * epsilon * Id)
    prog.add_lmi(state)
    atten = LmiSpec("cert_atten", [cs.ntilde, d, d], sense="nsd", margin=margin)
    atten.scal(0, 0, "mu", -np.eye(cs.ntilde))
    atten.term(0, 1, "P", L=cs.Lambda.T)
    atten.term(0, 2, "P", L=cs.Lambda.T)
    atten.term(1, 1, "P", coef=-0.5)
    atten.const(2, 2, -Id)
    prog.add_lmi(atten)
    raw = solve_conic(prog, solver=solver, verbose=verbose)
    out = {"status": raw["status"], "solver": raw.get("solver")}
    if raw["x"] is None:
        return out
    vals = prog.values_from(raw["x"])
    P = vals["P"]
    mu = float(vals["mu"])
    Q = np.linalg.inv(P)
    Q = 0.5 * (Q + Q.T)
    out.update(
        P=P, mu=mu, Q=Q, Gamma=Q @ Q, Theta=Q @ cs.diag5_ktilde(g).T,
        residuals=prog.evaluate_residuals(vals),
        min_eig_P=float(np.linalg.eigvalsh(P)[0]),
    )
    return out


class SynthesisResult:
    """Everything the synthesis pipeline produced, certified or not."""

    def __init__(self):
        self.status = "incomplete"
        self.gamma = None
        self.epsilon = None
        self.alpha = None
        self.L = None
        self.observer_report = None
        self.comparison = None
        self.problem = None
        self.sdp = None
        self.gains = None
        self.certificate = None
        self.cert_solution = None
        self.structure_used = None

    def summary(self):
        out = {
            "status": self.status,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "epsilon": self.epsilon,
        }
        if self.observer_report is not None:
            out["rho_comparison"] = self.observer_report["rho_comparison"]
            out["observer_iss"] = self.observer_report["iss"]
        if self.sdp is not None:
            out["sdp_status"] = self.sdp.status
            out["sdp_mu"] = self.sdp.mu_star
            out["sdp_residuals"] = self.sdp.residuals
        if self.cert_solution is not None and "mu" in self.cert_solution:
            out["certified_mu"] = self.cert_solution["mu"]
        if self.certificate is not None:
            out["certified"] = self.certificate["certified"]
        out["structure"] = self.structure_used
        return out


def synthesize(model, dp=None, L=None, alpha=0.1, solver=None, eps0=1e-3,
               reg_policy="only_if_singular", selection="auto", search_budget=20000,
               search_seed=0, deviation_tol=REPLICA_TOL, verbose=False):
    """Full pipeline: decompose, pick/verify the observer gain, solve, certify.

    Stages:
      1. decompose the nonlinearities (unless dp given) and regularize F_phi;
      2. verify the supplied observer gain, or search for one (best-effort;
         a non-contracting comparison matrix is reported, not fatal);
      3. assemble and solve the synthesis SDP with a dense Theta; if the
         recovered replica deviation exceeds tolerance, re-solve first with
         the off-support Theta entries pinned, then with fully replicated
         (Q, Theta);
      4. re-certify the averaged gains with an independent fixed-gain SDP
         and package the induced (mu, Gamma, Q, Theta) tuple, whose
         residuals on all synthesis and certificate LMIs are re-checked.

    result.status: "certified" when stage 4 closes; "uncertified_gains" when
    gains were recovered but no certificate closed; "infeasible" /
    "numeric_error" when the synthesis SDP produced no usable point.
    """
    res = SynthesisResult()
    res.alpha = float(alpha)
    if dp is None:
        dp = decompose_model(model, selection=selection)
    F_phi = regularize_bounding(dp.phi.F, eps0=eps0, policy=reg_policy)
    F_psi = dp.psi.F
    gamma = float(np.linalg.norm(F_phi, np.inf))
    res.gamma = gamma
    if L is None:
        L, obs = search_observer_gain(model, dp, F_phi=F_phi, F_psi=F_psi,
                                      budget=search_budget, seed=search_seed)
    else:
        L = np.asarray(L, dtype=float)
        obs = verify_observer_gain(model, dp, L, F_phi=F_phi, F_psi=F_psi)
    res.L = L
    res.observer_report = obs
    cs = build_comparison(model, dp, L, F_phi=F_phi, F_psi=F_psi)
    res.comparison = cs

    sol = None
    for structure in ("free", "pinned", "replicated"):
        problem = assemble_sdp(cs, alpha, gamma, structure=structure)
        res.epsilon = problem.epsilon
        cand = solve_sdp(problem, solver=solver, verbose=verbose)
        if not cand.feasible:
            # keep the earlier feasible stage if one exists; a stricter
            # structure may genuinely cut the feasible set
            if sol is None:
                sol = cand
                res.problem = problem
                res.structure_used = structure
            break
        recover_gains(cand, cs)
        sol = cand
        res.problem = problem
        res.structure_used = structure
        if cand.info["replica_deviation"] <= deviation_tol:
            break
    res.sdp = sol
    if sol is None or not sol.feasible or sol.gains is None:
        res.status = sol.status if sol is not None and sol.status in ("infeasible", "unbounded") else (
            sol.status if sol is not None else "numeric_error")
        return res
    res.gains = sol.gains

    cert = certify_gains(cs, sol.gains, res.alpha, res.epsilon, solver=solver)
    res.cert_solution = cert
    if cert["status"] in ("optimal", "optimal_inaccurate") and "P" in cert:
        report = verify_certified_gains(
            model, dp, L, sol.gains, cert["P"], cert["mu"], res.alpha, res.epsilon,
            F_phi=F_phi, F_psi=F_psi,
        )
        res.certificate = report
        if report["certified"]:
            res.status = "certified"
            # adopt the induced tuple so the reported point satisfies the
            # synthesis LMIs and the certificate LMIs at the same time
            sol.Q = cert["Q"]
            sol.Gamma = cert["Gamma"]
            sol.Theta = cert["Theta"]
            sol.mu_star = cert["mu"]
            sol.residuals = {
                **res.problem.prog.evaluate_residuals(
                    {"mu": cert["mu"], "Gamma": sol.Gamma, "Q": sol.Q, "Theta": sol.Theta}
                ),
                **{k: v for k, v in cert["residuals"].items()},
            }
            return res
    res.status = "uncertified_gains"
    return res
