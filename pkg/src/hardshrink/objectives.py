"""Differentiable objectives and restricted-curvature diagnostics.

Vector objectives expose ``value``, ``gradient`` and ``restricted_minimize``;
the last one is the fully-corrective oracle used by HTP, the two-stage
methods, partial hard thresholding and FoBa.

Scaling conventions differ on purpose. The least-squares loss is
``(1/n)||y - X theta||^2`` so its Hessian is ``(2/n) X^T X``; the corrected
losses are ``0.5 theta^T Gamma theta - gamma^T theta`` with Hessian ``Gamma``.
The curvature estimates always describe the objective actually minimized.
"""
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import eigsh

from .numkit import RngStream, _check_symmetric, _solve_block, as_vector, sym_eig_extremes
from .projections import rank_project

__all__ = [
    "LeastSquaresObjective",
    "MatrixLeastSquares",
    "Objective",
    "QuadraticObjective",
    "RscRssEstimate",
    "estimate_matrix_rss",
    "estimate_rsc_rss",
    "estimate_rsc_rss_path",
    "make_corrected_additive",
    "make_corrected_missing",
    "make_least_squares",
    "make_matrix_least_squares",
    "theorem3_error_bound",
]


class Objective:
    """Base class for a differentiable function of a length-``p`` vector.

    Subclasses implement :meth:`value` and :meth:`gradient`. The default
    :meth:`restricted_minimize` runs backtracking gradient descent on the
    coordinates in ``S``; quadratics override it with an exact solve.
    """

    possibly_nonconvex = False

    def __init__(self, dim):
        self.dim = int(dim)

    def value(self, theta):
        raise NotImplementedError

    def gradient(self, theta):
        raise NotImplementedError

    def restricted_minimize(self, S, x0=None, tol=1e-8, max_iters=None):
        S = np.asarray(S, dtype=np.int64)
        x = np.zeros(self.dim) if x0 is None else np.array(x0, dtype=np.float64)
        off = np.ones(self.dim, dtype=bool)
        off[S] = False
        x[off] = 0.0
        if S.size == 0:
            return x
        max_iters = 10 * self.dim if max_iters is None else max_iters
        step = 1.0
        f = self.value(x)
        for _ in range(max_iters):
            g = self.gradient(x)[S]
            gn = float(np.linalg.norm(g))
            if gn <= tol * (1.0 + np.linalg.norm(x)):
                break
            while True:
                trial = x.copy()
                trial[S] -= step * g
                ft = self.value(trial)
                if ft <= f - 0.5 * step * gn * gn or step < 1e-20:
                    break
                step *= 0.5
            x, f = trial, ft
            step *= 2.0
        return x


class QuadraticObjective(Objective):
    """``f(theta) = 0.5 theta^T A theta - b^T theta + c`` with symmetric ``A``.

    ``A`` need not be positive semidefinite. Code that only needs parts of the
    Hessian should go through :meth:`block`, :meth:`hessian_diag` and
    :meth:`hessian_extremes`, which subclasses may compute without ever
    forming ``A``.
    """

    def __init__(self, A, b, c=0.0, possibly_nonconvex=False):
        b = as_vector(b, "b")
        super().__init__(b.shape[0])
        if A is not None:
            A = np.asarray(A, dtype=np.float64)
            if A.ndim != 2 or A.shape != (b.shape[0], b.shape[0]):
                raise ValueError(f"A has shape {A.shape}, expected {(b.shape[0],) * 2}")
            _check_symmetric(A)
        self._A = A
        self.b = b
        self.c = float(c)
        self.possibly_nonconvex = bool(possibly_nonconvex)

    @property
    def A(self):
        return self._A

    def block(self, S):
        """Principal submatrix ``A[S, S]``."""
        S = np.asarray(S, dtype=np.int64)
        return self.A[np.ix_(S, S)]

    def hessian_diag(self, idx=None):
        d = np.diag(self.A)
        return d if idx is None else d[idx]

    def hessian_extremes(self):
        """``(lambda_min, lambda_max)`` of the full Hessian."""
        return sym_eig_extremes(self.A)

    def _matvec(self, theta):
        nz = np.flatnonzero(theta)
        if nz.size * 2 < self.dim:
            # rows are contiguous and A is symmetric, so A[nz].T == A[:, nz]
            return self.A[nz].T @ theta[nz]
        return self.A @ theta

    def value(self, theta):
        theta = as_vector(theta, "theta")
        return float(0.5 * theta @ self._matvec(theta) - self.b @ theta + self.c)

    def gradient(self, theta):
        theta = as_vector(theta, "theta")
        return self._matvec(theta) - self.b

    def value_and_gradient(self, theta):
        theta = as_vector(theta, "theta")
        Ax = self._matvec(theta)
        return float(0.5 * theta @ Ax - self.b @ theta + self.c), Ax - self.b

    def restricted_minimize(self, S, x0=None, tol=None, max_iters=None):
        S = np.asarray(S, dtype=np.int64)
        x = np.zeros(self.dim)
        if S.size:
            x[S] = _solve_block(self.block(S), self.b[S])
        return x


class LeastSquaresObjective(QuadraticObjective):
    """``(1/n)||y - X theta||^2`` in quadratic form, ``A = (2/n) X^T X``.

    Values and gradients always come from the residual. The Gram matrix is formed up
    front unless it would exceed ``gram_bytes`` of memory; in that case it is
    only built if ``A`` is accessed, and blocks and eigenvalues come from
    ``X``.
    """

    GRAM_BYTES = 1 << 30

    def __init__(self, X, y, gram_bytes=None):
        X = np.asarray(X, dtype=np.float64)
        y = as_vector(y, "y")
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X has shape {X.shape} but y has length {y.shape[0]}")
        n, p = X.shape
        self.X = X
        self.y = y
        self._wide = n < p
        limit = self.GRAM_BYTES if gram_bytes is None else gram_bytes
        A = None if 8 * p * p > limit else (2.0 / n) * (X.T @ X)
        super().__init__(A, (2.0 / n) * (X.T @ y), float(y @ y) / n)

    @property
    def A(self):
        if self._A is None:
            self._A = (2.0 / self.X.shape[0]) * (self.X.T @ self.X)
        return self._A

    def block(self, S):
        if self._A is not None:
            return super().block(S)
        XS = self.X[:, np.asarray(S, dtype=np.int64)]
        return (2.0 / self.X.shape[0]) * (XS.T @ XS)

    def hessian_diag(self, idx=None):
        X = self.X if idx is None else self.X[:, idx]
        return (2.0 / self.X.shape[0]) * np.einsum("ij,ij->j", X, X)

    def hessian_extremes(self):
        if self._A is not None or not self._wide:
            return super().hessian_extremes()
        # rank(A) <= n < p, so the smallest eigenvalue is zero
        n = self.X.shape[0]
        return 0.0, float(np.linalg.eigvalsh((2.0 / n) * (self.X @ self.X.T))[-1])

    # value and gradient from the residual: no cancellation between the
    # quadratic and linear terms, so f is exactly zero at an interpolant
    def value(self, theta):
        r = self.X @ as_vector(theta, "theta") - self.y
        return float(r @ r) / self.X.shape[0]

    def gradient(self, theta):
        return self.value_and_gradient(theta)[1]

    def value_and_gradient(self, theta):
        n = self.X.shape[0]
        r = self.X @ as_vector(theta, "theta") - self.y
        return float(r @ r) / n, (2.0 / n) * (self.X.T @ r)


def make_least_squares(X, y, gram_bytes=None):
    return LeastSquaresObjective(X, y, gram_bytes)


def _check_design(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = as_vector(y, "y")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has shape {X.shape} but y has length {y.shape[0]}")
    return X, y


def make_corrected_additive(X_noisy, y, Sigma_W):
    """Corrected quadratic for features observed with additive Gaussian noise.

    ``Gamma = X~^T X~ / n - Sigma_W`` and ``gamma = X~^T y / n``; ``Gamma`` is
    indefinite whenever ``n < p`` and ``Sigma_W`` is positive definite.
    """
    X, y = _check_design(X_noisy, y)
    Sigma_W = np.asarray(Sigma_W, dtype=np.float64)
    p = X.shape[1]
    if Sigma_W.shape != (p, p):
        raise ValueError(f"Sigma_W has shape {Sigma_W.shape}, expected {(p, p)}")
    n = X.shape[0]
    Gamma = X.T @ X / n - Sigma_W
    Gamma = 0.5 * (Gamma + Gamma.T)
    return QuadraticObjective(Gamma, X.T @ y / n, 0.0, possibly_nonconvex=True)


def make_corrected_missing(X_obs, mask, y, nu):
    """Corrected quadratic for entries missing independently with rate ``nu``.

    With zero-filled observations ``Z``, ``M = Z^T Z / n`` is rescaled to
    ``M_ij / (1 - nu)^2`` off the diagonal and ``M_jj / (1 - nu)`` on it, and
    ``gamma = Z^T y / (n (1 - nu))``.
    """
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"missing rate nu={nu} must lie in [0, 1)")
    X, y = _check_design(X_obs, y)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != X.shape:
        raise ValueError("mask shape does not match X_obs")
    Z = np.where(mask, X, 0.0)
    n = Z.shape[0]
    keep = 1.0 - nu
    M = Z.T @ Z / n
    Gamma = M / keep**2
    np.fill_diagonal(Gamma, np.diag(M) / keep)
    return QuadraticObjective(Gamma, Z.T @ y / (n * keep), 0.0, possibly_nonconvex=True)


@dataclass(frozen=True)
class RscRssEstimate:
    """Empirical restricted curvature at sparsity level ``k``.

    ``alpha_hat`` upper-bounds and ``L_hat`` lower-bounds the true constants
    unless every support was enumerated (``exhaustive``).
    """

    k: int
    alpha_hat: float
    L_hat: float
    trials: int
    exhaustive: bool = False

    @property
    def nonconvex(self):
        return self.alpha_hat <= 0.0

    @property
    def condition_number(self):
        return self.L_hat / self.alpha_hat if self.alpha_hat > 0 else math.inf


def _sample_supports(p, k, trials, rng, anchor=None):
    for _ in range(trials):
        yield np.sort(rng.choice(p, size=k, replace=False))
    if anchor is not None:
        anchor = np.unique(np.asarray(anchor, dtype=np.int64))[:k]
        if anchor.size < k:
            rest = np.setdiff1d(np.arange(p), anchor)
            anchor = np.concatenate([anchor, rng.choice(rest, size=k - anchor.size, replace=False)])
        yield np.sort(anchor)


def _block_extremes(obj, S):
    # principal submatrices of a symmetric matrix are symmetric; skip the check
    w = np.linalg.eigvalsh(obj.block(S))
    return float(w[0]), float(w[-1])


def _block_max(obj, S):
    B = obj.block(S)
    if B.shape[0] < 64:
        return math.nan, float(np.linalg.eigvalsh(B)[-1])
    v0 = np.ones(B.shape[0])
    return math.nan, float(eigsh(B, k=1, which="LA", return_eigenvectors=False, tol=0, v0=v0)[0])


def estimate_rsc_rss(obj, k, trials=200, rng=None, anchor=None, exhaustive_limit=5000,
                     which="both"):
    """Estimate RSC/RSS constants of a quadratic at sparsity level ``k``.

    For a quadratic the constants are the extreme eigenvalues of the k x k
    principal submatrices of its Hessian. All supports are enumerated when
    there are at most ``exhaustive_limit`` of them; otherwise ``trials``
    uniform supports are sampled (plus ``anchor`` padded to size ``k``).
    ``which="max"`` computes only the RSS side (by Lanczos, which is cheaper
    on large blocks) and leaves ``alpha_hat`` as NaN.
    """
    if which not in ("both", "max"):
        raise ValueError(f"which must be 'both' or 'max', got {which!r}")
    p = obj.dim
    k = int(k)
    if not 1 <= k <= p:
        raise ValueError(f"sparsity level k={k} out of range for p={p}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if math.comb(p, k) <= exhaustive_limit:
        supports = (np.array(c) for c in itertools.combinations(range(p), k))
        exhaustive = True
    else:
        rng = rng if rng is not None else RngStream(0, 0)
        supports = _sample_supports(p, k, trials, rng, anchor)
        exhaustive = False
    lo, hi, count = math.inf, -math.inf, 0
    extremes = _block_extremes if which == "both" else _block_max
    for S in supports:
        a, b = extremes(obj, S)
        lo, hi, count = min(lo, a), max(hi, b), count + 1
    if which == "max":
        lo = math.nan
    return RscRssEstimate(k, lo, hi, count, exhaustive)


def estimate_rsc_rss_path(obj, levels, trials=200, rng=None):
    """Estimates at several levels from nested random supports.

    Each trial draws one permutation and uses its prefixes, so by eigenvalue
    interlacing ``alpha_hat`` is non-increasing and ``L_hat`` non-decreasing
    in the level.
    """
    p = obj.dim
    levels = sorted(int(k) for k in levels)
    if levels and not 1 <= levels[0] <= levels[-1] <= p:
        raise ValueError("levels out of range")
    rng = rng if rng is not None else RngStream(0, 0)
    lo = {k: math.inf for k in levels}
    hi = {k: -math.inf for k in levels}
    for _ in range(trials):
        perm = rng.permutation(p)
        for k in levels:
            a, b = _block_extremes(obj, np.sort(perm[:k]))
            lo[k] = min(lo[k], a)
            hi[k] = max(hi[k], b)
    return [RscRssEstimate(k, lo[k], hi[k], trials) for k in levels]


def theorem3_error_bound(grad_inf_norm, alpha, s, s_star, epsilon):
    """Statistical error bound for an IHT iterate.

    ``2 sqrt(s + s_star) ||grad L(theta_bar)||_inf / alpha + sqrt(2 eps / alpha)``
    where ``alpha`` is the RSC constant at level ``s + s_star`` and ``eps``
    the optimization error in function value.
    """
    if alpha <= 0:
        raise ValueError(f"RSC constant alpha={alpha} must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    return 2.0 * math.sqrt(s + s_star) * grad_inf_norm / alpha + math.sqrt(2.0 * epsilon / alpha)


class MatrixLeastSquares:
    """``f(W) = (1/n) sum_i (<X_i, W>_F - y_i)^2`` over ``p1 x p2`` matrices."""

    possibly_nonconvex = False

    def __init__(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = as_vector(y, "y")
        if X.ndim != 3 or X.shape[0] != y.shape[0]:
            raise ValueError(f"X has shape {X.shape} but y has length {y.shape[0]}")
        self.shape = X.shape[1:]
        self.n = X.shape[0]
        self._Xf = X.reshape(self.n, -1)
        self.y = y

    def _check(self, W):
        W = np.asarray(W, dtype=np.float64)
        if W.shape != self.shape:
            raise ValueError(f"W has shape {W.shape}, expected {self.shape}")
        return W

    def residual(self, W):
        return self._Xf @ self._check(W).ravel() - self.y

    def value(self, W):
        r = self.residual(W)
        return float(r @ r) / self.n

    def gradient(self, W):
        r = self.residual(W)
        return ((2.0 / self.n) * (self._Xf.T @ r)).reshape(self.shape)

    def value_and_gradient(self, W):
        r = self.residual(W)
        return float(r @ r) / self.n, ((2.0 / self.n) * (self._Xf.T @ r)).reshape(self.shape)

    def hessian_apply(self, D):
        return ((2.0 / self.n) * (self._Xf.T @ (self._Xf @ D.ravel()))).reshape(self.shape)


def make_matrix_least_squares(X_list, y):
    X = np.asarray(X_list, dtype=np.float64)
    if X.ndim != 3:
        raise ValueError("X_list must hold matrices of a common shape")
    return MatrixLeastSquares(X, y)


def estimate_matrix_rss(mobj, rank, trials=20, power_iters=30, rng=None):
    """Lower estimate of the RSS constant over rank-``rank`` matrices.

    Runs a rank-projected power iteration on the Hessian from ``trials``
    random starts and reports the largest Rayleigh quotient seen.
    """
    rng = rng if rng is not None else RngStream(0, 0)
    rank = max(1, min(int(rank), min(mobj.shape)))
    best = 0.0
    for _ in range(trials):
        D = rank_project(rng.standard_normal(mobj.shape), rank)
        for _ in range(power_iters):
            nrm = np.linalg.norm(D)
            if nrm == 0:
                break
            D = D / nrm
            HD = mobj.hessian_apply(D)
            best = max(best, float(np.sum(D * HD)))
            D = rank_project(HD, rank)
    return best
