"""Structured LMIs flattened to a standard-form conic program.

Problems are described as block grids of symmetric LMI constraints over
named matrix variables, then lowered to the solver-facing standard form

    minimize    c^T x
    subject to  F_j0 + sum_i x_i F_ji  (NSD or PSD),   j = 1..k
                A_eq x = b_eq

with each F stored as a sparse map from scalar unknowns to matrix entries.
Any conic solver that accepts this form can be plugged in; the bundled
backend drives cvxpy and normalizes its statuses to
{optimal, optimal_inaccurate, infeasible, unbounded, numeric_error}.
"""

import os

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Var",
    "LmiSpec",
    "ConicProgram",
    "cvxpy_solve",
    "solve_conic",
    "SOLVER_ENV_VAR",
]

SOLVER_ENV_VAR = "FRAMERSYNTH_SDP_SOLVER"


class Var:
    """A named matrix (or scalar) unknown.

    kind:
        "scalar" -- one unknown;
        "sym"    -- symmetric p x p, packed as the upper triangle;
        "full"   -- dense p x q, packed row-major.
    replicas > 1 tiles the same unknown block-diagonally: local entry
    (i, j) is placed at (r*p + i, r*q + j) for every replica r, so the
    materialized matrix is diag_replicas(block) with shared entries.
    """

    def __init__(self, name, kind, p, q=None, replicas=1):
        if kind not in ("scalar", "sym", "full"):
            raise ValueError(f"unknown variable kind {kind!r}")
        if kind == "full" and q is None:
            raise ValueError("full variables need both dimensions")
        self.name = name
        self.kind = kind
        self.p = int(p) if kind != "scalar" else 1
        self.q = self.p if kind in ("scalar", "sym") else int(q)
        self.replicas = int(replicas)
        if kind == "scalar":
            self.size = 1
        elif kind == "sym":
            self.size = self.p * (self.p + 1) // 2
        else:
            self.size = self.p * self.q
        self.offset = None  # assigned at registration

    @property
    def rows(self):
        return self.p * self.replicas

    @property
    def cols(self):
        return self.q * self.replicas

    def entry_placements(self, k):
        """Matrix entries [(i, j, coef)] touched by local scalar k."""
        if self.kind == "scalar":
            base = [(0, 0, 1.0)]
        elif self.kind == "full":
            base = [(divmod(k, self.q)[0], k % self.q, 1.0)]
        else:
            i, j = _sym_unpack(k, self.p)
            base = [(i, j, 1.0)] if i == j else [(i, j, 1.0), (j, i, 1.0)]
        if self.replicas == 1:
            return base
        return [(r * self.p + i, r * self.q + j, c) for r in range(self.replicas) for (i, j, c) in base]

    def pack(self, M):
        """Scalar vector representing M (averaging replicas if tiled)."""
        M = np.asarray(M, dtype=float)
        if self.replicas > 1:
            blocks = [M[r * self.p:(r + 1) * self.p, r * self.q:(r + 1) * self.q] for r in range(self.replicas)]
            M = sum(blocks) / self.replicas
        if self.kind == "scalar":
            return np.array([float(M)]) if np.ndim(M) == 0 else M.reshape(1)
        if self.kind == "full":
            return M.reshape(-1)
        iu = np.triu_indices(self.p)
        return M[iu]

    def unpack(self, vec):
        """Materialize the full (replicated) matrix from its scalar vector."""
        vec = np.asarray(vec, dtype=float)
        if self.kind == "scalar":
            return float(vec[0])
        if self.kind == "full":
            block = vec.reshape(self.p, self.q)
        else:
            block = np.zeros((self.p, self.p))
            iu = np.triu_indices(self.p)
            block[iu] = vec
            block = block + block.T - np.diag(np.diag(block))
        if self.replicas == 1:
            return block
        out = np.zeros((self.rows, self.cols))
        for r in range(self.replicas):
            out[r * self.p:(r + 1) * self.p, r * self.q:(r + 1) * self.q] = block
        return out


def _sym_unpack(k, p):
    # inverse of row-major upper-triangle enumeration
    i = 0
    row_len = p
    while k >= row_len:
        k -= row_len
        i += 1
        row_len -= 1
    return i, i + k


class LmiSpec:
    """One symmetric block-grid LMI.

    Terms are attached to upper-triangle block positions (bi <= bj); the
    mirror position is filled with the transposed contribution
    automatically.  Term forms:

        const(bi, bj, M)                  : constant block M
        term(bi, bj, name, L, R, coef)    : coef * L @ X_name @ R  (None = I)
        scal(bi, bj, name, M)             : x_name * M  for scalar unknowns

    sense "nsd" asks F(x) <= -margin*I, "psd" asks F(x) >= margin*I.
    """

    def __init__(self, name, block_sizes, sense="nsd", margin=0.0):
        if sense not in ("nsd", "psd"):
            raise ValueError(f"unknown sense {sense!r}")
        self.name = name
        self.block_sizes = [int(s) for s in block_sizes]
        self.sense = sense
        self.margin = float(margin)
        self.offsets = np.concatenate([[0], np.cumsum(self.block_sizes)])
        self.dim = int(self.offsets[-1])
        self.grid = {}

    def _check(self, bi, bj):
        nb = len(self.block_sizes)
        if not (0 <= bi <= bj < nb):
            raise ValueError(f"block position ({bi}, {bj}) outside upper triangle of {nb} blocks")

    def const(self, bi, bj, M):
        self._check(bi, bj)
        M = np.asarray(M, dtype=float)
        self.grid.setdefault((bi, bj), []).append(("const", M))
        return self

    def term(self, bi, bj, name, L=None, R=None, coef=1.0):
        self._check(bi, bj)
        entry = ("var", name,
                 None if L is None else np.asarray(L, dtype=float),
                 None if R is None else np.asarray(R, dtype=float),
                 float(coef))
        self.grid.setdefault((bi, bj), []).append(entry)
        return self

    def scal(self, bi, bj, name, M):
        self._check(bi, bj)
        self.grid.setdefault((bi, bj), []).append(("scal", name, np.asarray(M, dtype=float)))
        return self

    def evaluate(self, values):
        """Numeric grid assembly at the given {name: matrix} values.

        Kept independent of the flattened-pencil path so solutions can be
        re-checked without trusting the lowering.
        """
        F = np.zeros((self.dim, self.dim))
        for (bi, bj), terms in self.grid.items():
            r0, c0 = self.offsets[bi], self.offsets[bj]
            p, q = self.block_sizes[bi], self.block_sizes[bj]
            block = np.zeros((p, q))
            for t in terms:
                if t[0] == "const":
                    block = block + t[1]
                elif t[0] == "scal":
                    block = block + float(values[t[1]]) * t[2]
                else:
                    _, name, L, R, coef = t
                    X = np.asarray(values[name], dtype=float)
                    if X.ndim == 0:
                        X = X.reshape(1, 1)
                    M = X if L is None else L @ X
                    M = M if R is None else M @ R
                    block = block + coef * M
            F[r0:r0 + p, c0:c0 + q] += block
            if bi != bj:
                F[c0:c0 + q, r0:r0 + p] += block.T
        return F


class ConicProgram:
    """Registered variables + objective + LMIs, lowered lazily to pencils."""

    def __init__(self):
        self.vars = {}
        self.order = []
        self.num_scalars = 0
        self.objective = {}
        self.lmis = []
        self._eq_rows = []

    def add_var(self, var):
        if var.name in self.vars:
            raise ValueError(f"duplicate variable {var.name!r}")
        var.offset = self.num_scalars
        self.vars[var.name] = var
        self.order.append(var.name)
        self.num_scalars += var.size
        return var

    def minimize(self, name, weight=1.0):
        """Add weight * (scalar variable) to the objective."""
        if self.vars[name].kind != "scalar":
            raise ValueError("objective terms must be scalar variables")
        self.objective[name] = self.objective.get(name, 0.0) + float(weight)

    def add_lmi(self, lmi):
        self.lmis.append(lmi)
        return lmi

    def pin_zero(self, name, local_indices):
        """Equality-constrain selected scalar components of a variable to zero."""
        var = self.vars[name]
        for k in local_indices:
            if not (0 <= k < var.size):
                raise ValueError(f"index {k} out of range for {name}")
            self._eq_rows.append(var.offset + int(k))

    def cost_vector(self):
        c = np.zeros(self.num_scalars)
        for name, w in self.objective.items():
            c[self.vars[name].offset] += w
        return c

    def equality_matrix(self):
        """(A_eq, b_eq) for the pinned entries; empty matrices when none."""
        if not self._eq_rows:
            return sp.csr_matrix((0, self.num_scalars)), np.zeros(0)
        rows = np.arange(len(self._eq_rows))
        cols = np.array(self._eq_rows)
        A = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(rows), self.num_scalars)).tocsr()
        return A, np.zeros(len(rows))

    def flatten_lmi(self, lmi):
        """Lower one LMI to (F0, G) with F(x) = unvec(F0 + G x), row-major vec.

        The margin shift is folded into F0 so the pencil encodes the
        non-strict constraint F(x) <= 0 (or >= 0) directly.
        """
        d = lmi.dim
        F0 = np.zeros((d, d))
        rows, cols, vals = [], [], []

        def emit(r0, c0, i, j, col, v):
            rows.append((r0 + i) * d + (c0 + j))
            cols.append(col)
            vals.append(v)

        for (bi, bj), terms in lmi.grid.items():
            r0, c0 = lmi.offsets[bi], lmi.offsets[bj]
            p, q = lmi.block_sizes[bi], lmi.block_sizes[bj]
            mirror = bi != bj
            rm, cm = c0, r0
            for t in terms:
                if t[0] == "const":
                    F0[r0:r0 + p, c0:c0 + q] += t[1]
                    if mirror:
                        F0[rm:rm + q, cm:cm + p] += t[1].T
                elif t[0] == "scal":
                    var, M = self.vars[t[1]], t[2]
                    col = var.offset
                    for i in range(M.shape[0]):
                        for j in range(M.shape[1]):
                            if M[i, j] != 0.0:
                                emit(r0, c0, i, j, col, M[i, j])
                                if mirror:
                                    emit(rm, cm, j, i, col, M[i, j])
                else:
                    _, name, L, R, coef = t
                    var = self.vars[name]
                    for k in range(var.size):
                        col = var.offset + k
                        for (ei, ej, ec) in var.entry_placements(k):
                            # contribution coef*ec * L[:, ei] outer R[ej, :]
                            lcol = None if L is None else L[:, ei]
                            rrow = None if R is None else R[ej, :]
                            if lcol is None and rrow is None:
                                emit(r0, c0, ei, ej, col, coef * ec)
                                if mirror:
                                    emit(rm, cm, ej, ei, col, coef * ec)
                            elif lcol is None:
                                for j in np.nonzero(rrow)[0]:
                                    emit(r0, c0, ei, j, col, coef * ec * rrow[j])
                                    if mirror:
                                        emit(rm, cm, j, ei, col, coef * ec * rrow[j])
                            elif rrow is None:
                                for i in np.nonzero(lcol)[0]:
                                    emit(r0, c0, i, ej, col, coef * ec * lcol[i])
                                    if mirror:
                                        emit(rm, cm, ej, i, col, coef * ec * lcol[i])
                            else:
                                block = coef * ec * np.outer(lcol, rrow)
                                for i, j in zip(*np.nonzero(block)):
                                    emit(r0, c0, i, j, col, block[i, j])
                                    if mirror:
                                        emit(rm, cm, j, i, col, block[i, j])
        # fold the strictness margin into the constant so the pencil encodes
        # a plain F(x) <= 0 (nsd) or F(x) >= 0 (psd)
        F0[np.diag_indices(d)] += lmi.margin if lmi.sense == "nsd" else -lmi.margin
        G = sp.coo_matrix((vals, (rows, cols)), shape=(d * d, self.num_scalars)).tocsr()
        return F0, G

    def standard_form(self):
        """(c, blocks, A_eq, b_eq) with blocks = [(dim, sense, F0, G)]."""
        c = self.cost_vector()
        blocks = [(l.dim, l.sense, *self.flatten_lmi(l)) for l in self.lmis]
        A_eq, b_eq = self.equality_matrix()
        return c, blocks, A_eq, b_eq

    def values_from(self, x):
        """Unpack a solver primal vector into {name: matrix}."""
        out = {}
        for name in self.order:
            var = self.vars[name]
            out[name] = var.unpack(x[var.offset:var.offset + var.size])
        return out

    def evaluate_residuals(self, values):
        """Worst-eigenvalue residual of every LMI at the given values.

        Residuals ignore the strictness margins: for an "nsd" constraint the
        residual is the max eigenvalue of the assembled block, for a "psd"
        constraint the negated min eigenvalue -- in both senses <= 0 means
        the non-strict inequality holds and small positive values measure
        violation.  Uses the structural grid evaluation, not the flattened
        pencil, so it cross-checks the lowering.
        """
        out = {}
        for lmi in self.lmis:
            F = lmi.evaluate(values)
            eigs = np.linalg.eigvalsh(0.5 * (F + F.T))
            out[lmi.name] = float(eigs[-1]) if lmi.sense == "nsd" else float(-eigs[0])
        return out


def cvxpy_solve(c, blocks, A_eq, b_eq, solver=None, verbose=False):
    """Reference backend: hand the standard form to cvxpy.

    Returns {"status", "x", "objective"}; statuses are normalized and solver
    exceptions come back as "numeric_error" rather than raising.
    """
    import cvxpy as cp

    nv = c.shape[0]
    x = cp.Variable(nv)
    cons = []
    for (d, sense, F0, G) in blocks:
        expr = cp.reshape(cp.Constant(G) @ x + F0.reshape(-1), (d, d), order="C")
        sym = 0.5 * (expr + expr.T)
        cons.append(sym << 0 if sense == "nsd" else sym >> 0)
    if A_eq.shape[0]:
        cons.append(cp.Constant(A_eq) @ x == b_eq)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    try:
        prob.solve(solver=solver, verbose=verbose)
    except cp.error.SolverError:
        return {"status": "numeric_error", "x": None, "objective": None}
    status_map = {
        cp.OPTIMAL: "optimal",
        cp.OPTIMAL_INACCURATE: "optimal_inaccurate",
        cp.INFEASIBLE: "infeasible",
        cp.INFEASIBLE_INACCURATE: "infeasible",
        cp.UNBOUNDED: "unbounded",
        cp.UNBOUNDED_INACCURATE: "unbounded",
    }
    status = status_map.get(prob.status, "numeric_error")
    xv = None if x.value is None else np.asarray(x.value, dtype=float)
    if status in ("optimal", "optimal_inaccurate") and xv is None:
        status = "numeric_error"
    obj = None if prob.value is None or not np.isfinite(prob.value) else float(prob.value)
    return {"status": status, "x": xv, "objective": obj}


_DEFAULT_CHAIN = ("CLARABEL", "SCS")


def solve_conic(prog, solver=None, verbose=False):
    """Flatten and solve a ConicProgram.

    solver resolution order: explicit argument, then the FRAMERSYNTH_SDP_SOLVER
    environment variable, then a built-in chain tried until a solver returns a
    conclusive status (anything but numeric_error).
    """
    c, blocks, A_eq, b_eq = prog.standard_form()
    chosen = solver or os.environ.get(SOLVER_ENV_VAR) or None
    if chosen:
        result = cvxpy_solve(c, blocks, A_eq, b_eq, solver=chosen, verbose=verbose)
        result["solver"] = chosen
        return result
    result = {"status": "numeric_error", "x": None, "objective": None}
    for name in _DEFAULT_CHAIN:
        result = cvxpy_solve(c, blocks, A_eq, b_eq, solver=name, verbose=verbose)
        result["solver"] = name
        if result["status"] != "numeric_error":
            return result
    return result
