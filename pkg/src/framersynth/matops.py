"""Elementwise matrix splittings and interval vectors.

The whole library leans on the decomposition of a real matrix M into its
nonnegative part M+ = max(M, 0) and nonpositive remainder M- = M+ - M,
so that M = M+ - M- and |M| = M+ + M- hold entrywise with M+, M- >= 0.
"""

import numpy as np

__all__ = [
    "pos_part",
    "neg_part",
    "abs_mat",
    "sign_mat",
    "spectral_radius",
    "IntervalVec",
]


def pos_part(M):
    """Entrywise nonnegative part max(M, 0)."""
    M = np.asarray(M, dtype=float)
    return np.maximum(M, 0.0)


def neg_part(M):
    """Entrywise nonpositive remainder max(-M, 0), so M = pos_part(M) - neg_part(M)."""
    M = np.asarray(M, dtype=float)
    return np.maximum(-M, 0.0)


def abs_mat(M):
    """Entrywise absolute value, equal to pos_part(M) + neg_part(M)."""
    return np.abs(np.asarray(M, dtype=float))


def sign_mat(M):
    """Entrywise sign with the convention sign(0) = +1.

    The +1 convention at zero keeps selector constructions deterministic for
    rows whose slope interval touches zero.
    """
    M = np.asarray(M, dtype=float)
    return np.where(M >= 0.0, 1.0, -1.0)


def spectral_radius(M):
    """max |eig(M)| for a square matrix M."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral_radius needs a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


class IntervalVec:
    """Axis-aligned box {z : lo <= z <= hi} in R^n.

    Parameters
    ----------
    lo, hi : array_like, shape (n,)
        Componentwise bounds.  ``lo <= hi`` is enforced at construction.
    """

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"bound shape mismatch: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        self.lo = lo
        self.hi = hi

    @property
    def dim(self):
        return self.lo.shape[0]

    def width(self):
        """Componentwise hi - lo (always >= 0)."""
        return self.hi - self.lo

    def midpoint(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, z, tol=0.0):
        """True if lo - tol <= z <= hi + tol componentwise."""
        z = np.asarray(z, dtype=float)
        return bool(np.all(z >= self.lo - tol) and np.all(z <= self.hi + tol))

    def sample(self, rng):
        """Uniform draw from the box using the given numpy Generator."""
        return rng.uniform(self.lo, self.hi)

    def vertex_sample(self, rng):
        """Random vertex of the box (each coordinate lo or hi with prob 1/2)."""
        pick = rng.integers(0, 2, size=self.dim).astype(bool)
        return np.where(pick, self.hi, self.lo)

    def __repr__(self):
        return f"IntervalVec(lo={self.lo!r}, hi={self.hi!r})"
