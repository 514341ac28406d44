"""Remainder decompositions of slope-bounded nonlinear maps.

A map g : R^n -> R^p with entrywise Jacobian bounds Jlo <= J(x) <= Jhi is
split as g(x) = H x + mu(x) where H is constant and every entry of the
residual Jacobian keeps a single sign over the whole domain (each partial
derivative of mu is either never positive or never negative).  Such
sign-stable residuals admit a two-argument extension

    mu_d(z1, z2)_i = mu_i(xi)   with  xi_j = z1_j  if  dmu_i/dx_j can be > 0
                                      xi_j = z2_j  otherwise

which is nondecreasing in z1, nonincreasing in z2, and collapses to mu on
the diagonal: mu_d(x, x) = mu(x).  The entrywise slope-range matrix F
bounds the spread of mu_d between swapped arguments, which is what the
interval propagation downstream consumes.
"""

import numpy as np

from .matops import pos_part, neg_part

__all__ = [
    "Term",
    "NonlinearMap",
    "JssDecomposition",
    "is_sign_stable",
    "vertex_selectors",
    "remainder_decompose",
    "eval_decomposition",
    "bounding_matrix",
    "regularize_bounding",
]

_KINDS = ("sin", "cos", "lin", "const")


class Term:
    """One additive term ``coef * kind(x[var])`` of an expression row.

    ``kind`` is one of sin/cos/lin/const; ``var`` is a 0-based input index
    (ignored for const terms).
    """

    __slots__ = ("kind", "coef", "var")

    def __init__(self, kind, coef, var=None):
        if kind not in _KINDS:
            raise ValueError(f"unknown term kind {kind!r}")
        if kind != "const" and var is None:
            raise ValueError(f"term kind {kind!r} needs a variable index")
        self.kind = kind
        self.coef = float(coef)
        self.var = None if kind == "const" else int(var)

    def value(self, x):
        if self.kind == "const":
            return self.coef
        xv = x[self.var]
        if self.kind == "lin":
            return self.coef * xv
        if self.kind == "sin":
            return self.coef * np.sin(xv)
        return self.coef * np.cos(xv)

    def slope_range(self):
        """Global bounds on d(term)/dx[var]."""
        if self.kind == "const":
            return (0.0, 0.0)
        if self.kind == "lin":
            return (self.coef, self.coef)
        # derivative of coef*sin / coef*cos lies in [-|coef|, |coef|]
        a = abs(self.coef)
        return (-a, a)

    def __repr__(self):
        return f"Term({self.kind!r}, {self.coef!r}, var={self.var!r})"


class NonlinearMap:
    """Vector map R^n_in -> R^n_out with entrywise Jacobian bounds.

    Two construction modes:

    * expression mode -- ``rows`` is a list (one per output) of lists of
      :class:`Term`; values and global slope bounds are derived from the
      terms.
    * callable mode -- ``func`` evaluates the map and ``jac_lo``/``jac_hi``
      must be supplied explicitly.
    """

    def __init__(self, n_in, n_out, rows=None, func=None, jac_lo=None, jac_hi=None):
        self.n_in = int(n_in)
        self.n_out = int(n_out)
        self.rows = rows
        self.func = func
        if rows is not None:
            if len(rows) != self.n_out:
                raise ValueError(f"expected {self.n_out} expression rows, got {len(rows)}")
            for terms in rows:
                for t in terms:
                    if t.var is not None and not (0 <= t.var < self.n_in):
                        raise ValueError(f"term variable {t.var} out of range for n_in={self.n_in}")
            lo = np.zeros((self.n_out, self.n_in))
            hi = np.zeros((self.n_out, self.n_in))
            for i, terms in enumerate(rows):
                for t in terms:
                    if t.var is None:
                        continue
                    a, b = t.slope_range()
                    lo[i, t.var] += a
                    hi[i, t.var] += b
            self.jac_lo = lo
            self.jac_hi = hi
        elif func is not None:
            if jac_lo is None or jac_hi is None:
                raise ValueError("callable maps need explicit jac_lo and jac_hi")
            self.jac_lo = np.asarray(jac_lo, dtype=float)
            self.jac_hi = np.asarray(jac_hi, dtype=float)
            if self.jac_lo.shape != (self.n_out, self.n_in):
                raise ValueError("jac_lo shape mismatch")
            if self.jac_hi.shape != (self.n_out, self.n_in):
                raise ValueError("jac_hi shape mismatch")
        else:
            raise ValueError("need expression rows or a callable")
        if np.any(self.jac_lo > self.jac_hi):
            raise ValueError("jac_lo exceeds jac_hi")

    @classmethod
    def zero(cls, n_in, n_out):
        """The identically-zero map (used when a model has no nonlinearity)."""
        return cls(n_in, n_out, rows=[[] for _ in range(n_out)])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.rows is not None:
            out = np.zeros(self.n_out)
            for i, terms in enumerate(self.rows):
                out[i] = sum(t.value(x) for t in terms)
            return out
        return np.asarray(self.func(x), dtype=float).reshape(self.n_out)

    def eval_row(self, i, x):
        """Evaluate output component i only."""
        if self.rows is not None:
            return float(sum(t.value(x) for t in self.rows[i]))
        return float(self(x)[i])

    def shifted(self, H):
        """The map x -> self(x) - H x, with Jacobian bounds shifted by -H."""
        H = np.asarray(H, dtype=float)
        if H.shape != (self.n_out, self.n_in):
            raise ValueError("shift matrix shape mismatch")
        if self.rows is not None:
            rows = []
            for i, terms in enumerate(self.rows):
                extra = [Term("lin", -H[i, j], j) for j in range(self.n_in) if H[i, j] != 0.0]
                rows.append(list(terms) + extra)
            return NonlinearMap(self.n_in, self.n_out, rows=rows)
        base = self.func
        return NonlinearMap(
            self.n_in,
            self.n_out,
            func=lambda x: np.asarray(base(x), dtype=float).reshape(self.n_out) - H @ np.asarray(x, dtype=float),
            jac_lo=self.jac_lo - H,
            jac_hi=self.jac_hi - H,
        )


def is_sign_stable(jac_lo, jac_hi):
    """True when no Jacobian entry can change sign (lo >= 0 or hi <= 0 entrywise)."""
    jac_lo = np.asarray(jac_lo, dtype=float)
    jac_hi = np.asarray(jac_hi, dtype=float)
    return bool(np.all((jac_lo >= 0.0) | (jac_hi <= 0.0)))


def vertex_selectors(jac_hi):
    """Boolean selector matrix: entry (i, j) is True iff jac_hi[i, j] > 0 strictly.

    Row i selects, for output component i of the two-argument extension,
    which inputs come from the first argument (True) versus the second.
    """
    return np.asarray(jac_hi, dtype=float) > 0.0


class JssDecomposition:
    """Result of a remainder decomposition: g(x) = H x + mu(x) with mu sign-stable."""

    def __init__(self, H, residual, selection):
        self.H = np.asarray(H, dtype=float)
        self.residual = residual
        self.selection = selection
        self.jac_lo = residual.jac_lo
        self.jac_hi = residual.jac_hi
        if not is_sign_stable(self.jac_lo, self.jac_hi):
            raise ValueError("residual Jacobian bounds are not sign-stable")
        self.selectors = vertex_selectors(self.jac_hi)
        self.F = bounding_matrix(self.jac_lo, self.jac_hi)

    @property
    def n_in(self):
        return self.residual.n_in

    @property
    def n_out(self):
        return self.residual.n_out

    def eval_pair(self, z1, z2):
        return eval_decomposition(self, z1, z2)

    def __repr__(self):
        return (
            f"JssDecomposition(n_out={self.n_out}, n_in={self.n_in}, "
            f"selection={self.selection!r}, nnz_H={int(np.count_nonzero(self.H))})"
        )


def remainder_decompose(map_, selection="auto"):
    """Split ``map_`` into H x + mu(x) with a sign-stable residual mu.

    Each entry of H is chosen from the endpoints of the corresponding
    Jacobian interval [Jlo, Jhi], which pins the residual slope range to
    [Jlo - H, Jhi - H] and makes it one-signed:

    * ``"upper"`` -- H = Jhi entrywise (residual slopes <= 0),
    * ``"lower"`` -- H = Jlo entrywise (residual slopes >= 0),
    * ``"auto"``  -- entrywise endpoint of smaller magnitude (ties to Jhi),
      which leaves entries whose interval already touches zero untouched.

    The spread matrix F of the residual equals Jhi - Jlo entrywise for every
    selection mode, so the choice affects H and the residual shape but not
    the downstream interval arithmetic.
    """
    if selection not in ("auto", "upper", "lower"):
        raise ValueError(f"unknown selection {selection!r}")
    lo, hi = map_.jac_lo, map_.jac_hi
    if selection == "upper":
        H = hi.copy()
    elif selection == "lower":
        H = lo.copy()
    else:
        H = np.where(np.abs(lo) < np.abs(hi), lo, hi)
    residual = map_.shifted(H) if np.any(H != 0.0) else map_
    return JssDecomposition(H, residual, selection)


def eval_decomposition(dec, z1, z2):
    """Two-argument extension mu_d(z1, z2) of the residual.

    Component i is the residual's component i evaluated at the mixed point
    that takes coordinate j from z1 where the residual can increase in x_j
    and from z2 elsewhere.  Satisfies mu_d(x, x) = mu(x) exactly, and for
    z2 <= x <= z1 brackets mu(x) between mu_d(z2, z1) and mu_d(z1, z2).
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z1.shape != (dec.n_in,) or z2.shape != (dec.n_in,):
        raise ValueError(f"argument shape mismatch, expected ({dec.n_in},)")
    out = np.empty(dec.n_out)
    for i in range(dec.n_out):
        xi = np.where(dec.selectors[i], z1, z2)
        out[i] = dec.residual.eval_row(i, xi)
    return out


def bounding_matrix(jac_lo, jac_hi):
    """Entrywise spread matrix F = pos(Jhi) + neg(Jlo) of a sign-stable range.

    F is nonnegative and bounds the swap gap of the two-argument extension:
    mu_d(z1, z2) - mu_d(z2, z1) <= F (z1 - z2) whenever z1 >= z2.
    """
    jac_lo = np.asarray(jac_lo, dtype=float)
    jac_hi = np.asarray(jac_hi, dtype=float)
    if not is_sign_stable(jac_lo, jac_hi):
        raise ValueError("bounding matrix needs sign-stable Jacobian ranges")
    return pos_part(jac_hi) + neg_part(jac_lo)


def regularize_bounding(F, eps0=0.001, policy="only_if_singular"):
    """Optionally add eps0 * I to a square spread matrix.

    Downstream scalings divide by the infinity norm of F, which is zero (or
    numerically useless) when F has empty rows; bumping the diagonal keeps
    those quantities well defined without materially loosening the bound.

    policy:
        "only_if_singular" -- add eps0*I iff F is singular (default),
        "always"           -- unconditionally add eps0*I,
        "never"            -- return F unchanged.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != F.shape[1]:
        raise ValueError("regularization applies to square spread matrices only")
    if policy not in ("only_if_singular", "always", "never"):
        raise ValueError(f"unknown policy {policy!r}")
    if policy == "never":
        return F.copy()
    if policy == "always":
        return F + eps0 * np.eye(F.shape[0])
    n = F.shape[0]
    if n == 0 or np.linalg.matrix_rank(F) < n:
        return F + eps0 * np.eye(n)
    return F.copy()
