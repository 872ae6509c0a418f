"""Dense linear-algebra kernels shared by the solvers.

Vectors and matrices are plain ``numpy.ndarray`` objects (float64). The
helpers here add the deterministic conventions the rest of the package relies
on: magnitude top-k with ascending-index tie-breaking, a thin SVD with sorted
factors, restricted symmetric solves with a ridge fallback, and reproducible
random streams.
"""
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from ._backend import kernels

__all__ = [
    "NumericalError",
    "RngStream",
    "SvdFactors",
    "as_vector",
    "solve_restricted",
    "svd",
    "sym_eig_extremes",
    "top_k_indices",
]

SYMMETRY_TOL = 1e-10


class NumericalError(ArithmeticError):
    """Raised when a linear system is singular beyond the ridge floor."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SvdFactors(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray

    def reconstruct(self):
        return (self.U * self.singular_values) @ self.V.T


def as_vector(v, name="v"):
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    return v


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def top_k_indices(v, k):
    """Indices of the ``k`` largest-magnitude entries of ``v``.

    The result is ordered by magnitude (descending); equal magnitudes are
    ordered by index, so the lower index wins at the cut.

    >>> top_k_indices([0.5, -2, 0.5, 3], 3).tolist()
    [3, 1, 0]
    """
    v = as_vector(v)
    k = int(k)
    if not 0 <= k <= v.shape[0]:
        raise ValueError(f"k={k} out of range for a vector of length {v.shape[0]}")
    _check_finite(v, "v")
    return kernels.top_k(v, k)


def svd(M):
    """Thin SVD ``M = U diag(s) V^T`` with ``k = min(p1, p2)`` factors.

    Uses LAPACK ``gesvd`` (Golub-Kahan bidiagonalisation + implicit QR).
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {M.shape}")
    _check_finite(M, "M")
    if M.size == 0:
        p1, p2 = M.shape
        k = min(p1, p2)
        return SvdFactors(np.zeros((p1, k)), np.zeros(k), np.zeros((p2, k)))
    U, s, Vt = sla.svd(M, full_matrices=False, lapack_driver="gesvd")
    return SvdFactors(U, s, Vt.T)


def _check_symmetric(A, name="A"):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    _check_finite(A, name)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    if np.max(np.abs(A - A.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return A


def sym_eig_extremes(A):
    """Return ``(lambda_min, lambda_max)`` of a symmetric matrix."""
    A = _check_symmetric(A)
    if A.shape[0] == 0:
        raise ValueError("empty matrix has no eigenvalues")
    w = np.linalg.eigvalsh(A)
    return float(w[0]), float(w[-1])


def solve_restricted(A, b, S):
    """Solve ``A[S, S] x_S = b[S]`` and embed the result in a length-p vector.

    Entries outside ``S`` are exactly zero. When the restricted block is
    numerically singular a ridge of ``1e-12 * trace(A_SS) / |S|`` is added;
    if that still leaves it singular, :class:`NumericalError` is raised.
    """
    A = np.asarray(A, dtype=np.float64)
    b = as_vector(b, "b")
    S = np.asarray(S, dtype=np.int64)
    x = np.zeros(b.shape[0])
    if S.size == 0:
        return x
    A_SS = A[np.ix_(S, S)]
    b_S = b[S]
    x[S] = _solve_block(A_SS, b_S)
    return x


def _solve_block(A_SS, b_S):
    try:
        c = sla.cho_factor(A_SS, check_finite=False)
    except sla.LinAlgError:
        pass
    else:
        x = sla.cho_solve(c, b_S, check_finite=False)
        if np.all(np.isfinite(x)):
            return x
    # indefinite or singular block: go through the eigendecomposition
    w, V = np.linalg.eigh(A_SS)
    top = float(np.max(np.abs(w)))
    if top == 0.0:
        raise NumericalError("restricted system is identically zero", condition=np.inf)
    if float(np.min(np.abs(w))) <= 1e-13 * top:
        k = A_SS.shape[0]
        ridge = 1e-12 * abs(float(np.trace(A_SS))) / k or 1e-12 * top
        w = w + ridge
        floor = float(np.min(np.abs(w)))
        if floor <= 1e-15 * top:
            raise NumericalError(
                f"restricted system singular beyond ridge floor (cond ~ {top / max(floor, 1e-300):.3g})",
                condition=top / max(floor, 1e-300),
            )
    return V @ ((V.T @ b_S) / w)


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Draws come from numpy's counter-based Philox generator seeded through
    ``SeedSequence(seed, spawn_key=(stream_id,))``, so distinct stream ids
    give independent streams and replaying a key replays the draws.
    """

    def __init__(self, seed=0, stream_id=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_id = int(stream_id) & 0xFFFFFFFFFFFFFFFF
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def random(self, size=None):
        return self.generator.random(size)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def permutation(self, x):
        return self.generator.permutation(x)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)
