"""Synthetic sparse-regression and matrix-sensing instances.

Designs are Gaussian with a chosen covariance: identity, disjoint 2x2 blocks
``[[1, 1-eps], [1-eps, 1]]``, or a planted structure that pairs half of the
true support with off-support coordinates at a correlation chosen so that
the covariance has a prescribed condition number.
"""
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numkit import RngStream, svd, top_k_indices

__all__ = [
    "CovarianceSpec",
    "MatrixInstance",
    "ProblemInstance",
    "corrupt_additive",
    "corrupt_missing",
    "default_sample_size",
    "load_instance",
    "make_covariance",
    "make_matrix_instance",
    "make_sparse_signal",
    "planted_correlation",
    "save_instance",
    "support_error",
    "synth_linear",
]

COVARIANCE_KINDS = ("identity", "two_block", "planted")


@dataclass(frozen=True)
class CovarianceSpec:
    kind: str = "identity"
    p: int = 0
    eps: float = 0.1
    kappa_target: float = 50.0

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if self.p < 1:
            raise ValueError("covariance dimension must be positive")
        if self.kind == "two_block" and not 0.0 <= self.eps <= 1.0:
            raise ValueError("two_block needs 0 <= eps <= 1")
        if self.kind == "planted" and not self.kappa_target > 1.0:
            raise ValueError("planted covariance needs kappa_target > 1")


def planted_correlation(kappa_target):
    """Correlation rho with ``(1 + rho) / (1 - rho) = kappa_target``."""
    return (kappa_target - 1.0) / (kappa_target + 1.0)


def make_covariance(spec, support=None, rng=None):
    """Build the covariance matrix described by ``spec``.

    For ``planted`` the true ``support`` (of even size) and an ``rng`` are
    required: half of the support is paired with as many off-support
    coordinates. Returns ``(Sigma, pairs)`` where ``pairs`` lists the
    correlated coordinate pairs (empty for ``identity``).
    """
    p = spec.p
    Sigma = np.eye(p)
    pairs = []
    if spec.kind == "two_block":
        if p % 2:
            raise ValueError(f"two_block needs an even dimension, got p={p}")
        pairs = [(2 * i, 2 * i + 1) for i in range(p // 2)]
        rho = 1.0 - spec.eps
    elif spec.kind == "planted":
        if support is None or rng is None:
            raise ValueError("planted covariance needs the true support and an rng")
        support = np.asarray(support, dtype=np.int64)
        if support.size % 2:
            raise ValueError(f"planted covariance needs an even support size, got {support.size}")
        half = support.size // 2
        outside = np.setdiff1d(np.arange(p), support)
        if outside.size < half:
            raise ValueError("not enough off-support coordinates to pair with")
        inside = rng.choice(support, size=half, replace=False)
        partners = rng.choice(outside, size=half, replace=False)
        pairs = [(int(i), int(j)) for i, j in zip(inside, partners)]
        rho = planted_correlation(spec.kappa_target)
    for i, j in pairs:
        Sigma[i, j] = Sigma[j, i] = rho
    return Sigma, pairs


def make_sparse_signal(p, s_star, rng):
    """``s_star`` uniformly placed entries equal to +1 or -1, zeros elsewhere."""
    if not 0 <= s_star <= p:
        raise ValueError(f"s_star={s_star} out of range for p={p}")
    theta = np.zeros(p)
    idx = rng.choice(p, size=s_star, replace=False)
    theta[idx] = rng.choice(np.array([-1.0, 1.0]), size=s_star)
    return theta


def default_sample_size(s_star, p, f_o=2.0):
    """``ceil(f_o * s_star * ln p)``."""
    return int(math.ceil(f_o * s_star * math.log(p)))


@dataclass
class ProblemInstance:
    X: np.ndarray
    y: np.ndarray
    theta_bar: np.ndarray
    Sigma: np.ndarray
    noise_sigma: float
    covariance: CovarianceSpec
    seed: int = 0
    stream_id: int = 0
    corruption: str = "none"
    Sigma_W: Optional[np.ndarray] = None
    nu: Optional[float] = None
    X_corrupted: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    pairs: list = field(default_factory=list)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def s_star(self):
        return int(np.count_nonzero(self.theta_bar))


def _sqrt_factor(Sigma, name="Sigma"):
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(Sigma)
        if w[0] < -1e-10 * max(1.0, w[-1]):
            raise ValueError(f"{name} is not positive semidefinite") from None
        return V * np.sqrt(np.clip(w, 0.0, None))


def _gaussian_rows(n, Sigma, rng, name="Sigma"):
    Z = rng.standard_normal((n, Sigma.shape[0]))
    if np.array_equal(Sigma, np.eye(Sigma.shape[0])):
        return Z
    return Z @ _sqrt_factor(Sigma, name).T


def synth_linear(p, s_star, n, sigma, cov=None, rng=None):
    """Draw ``theta_bar``, ``X ~ N(0, Sigma)`` rows and ``y = X theta_bar + xi``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    rng = rng if rng is not None else RngStream(0, 0)
    cov = cov if cov is not None else CovarianceSpec("identity", p)
    if cov.p != p:
        raise ValueError(f"covariance dimension {cov.p} does not match p={p}")
    theta_bar = make_sparse_signal(p, s_star, rng)
    Sigma, pairs = make_covariance(cov, np.flatnonzero(theta_bar), rng)
    X = _gaussian_rows(n, Sigma, rng)
    y = X @ theta_bar
    if sigma > 0:
        y = y + sigma * rng.standard_normal(n)
    return ProblemInstance(X, y, theta_bar, Sigma, float(sigma), cov, rng.seed, rng.stream_id,
                           pairs=pairs)


def corrupt_additive(inst, Sigma_W, rng):
    """Return a copy whose ``X_corrupted = X + W`` with rows ``W_i ~ N(0, Sigma_W)``."""
    Sigma_W = np.asarray(Sigma_W, dtype=np.float64)
    if Sigma_W.shape != (inst.p, inst.p) or not np.allclose(Sigma_W, Sigma_W.T):
        raise ValueError("Sigma_W must be a symmetric p x p matrix")
    if np.any(Sigma_W):
        noise = _gaussian_rows(inst.n, Sigma_W, rng, "Sigma_W")
    else:
        noise = np.zeros_like(inst.X)
    return dataclasses.replace(inst, corruption="additive", Sigma_W=Sigma_W,
                               X_corrupted=inst.X + noise, mask=None, nu=None)


def corrupt_missing(inst, nu, rng):
    """Return a copy where each entry is missing with probability ``nu`` (zero-filled)."""
    if not 0.0 <= nu < 1.0:
        raise ValueError(f"missing rate nu={nu} must lie in [0, 1)")
    mask = rng.random(inst.X.shape) >= nu
    return dataclasses.replace(inst, corruption="missing", nu=float(nu), mask=mask,
                               X_corrupted=np.where(mask, inst.X, 0.0), Sigma_W=None)


def support_error(theta_hat, theta_bar, s_star):
    """Count (and fraction) of true-support coordinates missing from the
    top-``s_star`` entries of ``theta_hat``."""
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    theta_bar = np.asarray(theta_bar, dtype=np.float64)
    if theta_hat.shape != theta_bar.shape:
        raise ValueError("theta_hat and theta_bar differ in shape")
    if s_star == 0:
        return 0, 0.0
    found = top_k_indices(theta_hat, s_star)
    found = found[theta_hat[found] != 0]
    missed = np.setdiff1d(np.flatnonzero(theta_bar), found).size
    return int(missed), missed / s_star


@dataclass
class MatrixInstance:
    X: np.ndarray
    y: np.ndarray
    W_bar: np.ndarray
    U0: np.ndarray
    V0: np.ndarray
    noise_sigma: float
    seed: int = 0
    stream_id: int = 0

    @property
    def r_star(self):
        return self.U0.shape[1]


def make_matrix_instance(p1, p2, r_star, n, sigma, rng):
    """Rank-``r_star`` ``W_bar = U0 V0^T`` observed through Gaussian sensing.

    Factor entries have variance ``1/sqrt(r_star)`` so ``W_bar`` has unit
    entry variance.
    """
    if not 1 <= r_star <= min(p1, p2):
        raise ValueError(f"r_star={r_star} out of range for shape {(p1, p2)}")
    scale = r_star ** -0.25
    U0 = scale * rng.standard_normal((p1, r_star))
    V0 = scale * rng.standard_normal((p2, r_star))
    W_bar = U0 @ V0.T
    X = rng.standard_normal((n, p1, p2))
    y = X.reshape(n, -1) @ W_bar.ravel()
    if sigma > 0:
        y = y + sigma * rng.standard_normal(n)
    return MatrixInstance(X, y, W_bar, U0, V0, float(sigma), rng.seed, rng.stream_id)


def subspace_misses(W_hat, inst):
    """Matrix analogue of the support error: ``r* - ||U0_orth^T U_hat||_F^2`` rounded."""
    Q, _ = np.linalg.qr(inst.U0)
    r = inst.r_star
    U_hat = svd(W_hat).U[:, :r]
    overlap = float(np.sum((Q.T @ U_hat) ** 2))
    return max(0, int(round(r - overlap)))


def _write_csv(path, a):
    a = np.atleast_2d(a) if np.ndim(a) > 1 else np.asarray(a).reshape(-1, 1)
    np.savetxt(path, a, delimiter=",", fmt="%.17g")


def _read_csv(path, ndim):
    a = np.loadtxt(path, delimiter=",", ndmin=2)
    return a.ravel() if ndim == 1 else a


def save_instance(inst, directory):
    """Serialize to ``meta.json`` plus 17-significant-digit CSV files."""
    os.makedirs(directory, exist_ok=True)
    if isinstance(inst, MatrixInstance):
        meta = {
            "kind": "matrix",
            "n": int(inst.X.shape[0]),
            "p1": int(inst.X.shape[1]),
            "p2": int(inst.X.shape[2]),
            "r_star": inst.r_star,
            "noise_sigma": inst.noise_sigma,
            "seed": inst.seed,
            "stream_id": inst.stream_id,
        }
        _write_csv(os.path.join(directory, "X.csv"), inst.X.reshape(inst.X.shape[0], -1))
        _write_csv(os.path.join(directory, "y.csv"), inst.y)
        _write_csv(os.path.join(directory, "W_bar.csv"), inst.W_bar)
        _write_csv(os.path.join(directory, "U0.csv"), inst.U0)
        _write_csv(os.path.join(directory, "V0.csv"), inst.V0)
    else:
        meta = {
            "kind": "linear",
            "n": inst.n,
            "p": inst.p,
            "s_star": inst.s_star,
            "noise_sigma": inst.noise_sigma,
            "covariance": dataclasses.asdict(inst.covariance),
            "pairs": [list(pq) for pq in inst.pairs],
            "corruption": inst.corruption,
            "nu": inst.nu,
            "seed": inst.seed,
            "stream_id": inst.stream_id,
        }
        _write_csv(os.path.join(directory, "X.csv"), inst.X)
        _write_csv(os.path.join(directory, "y.csv"), inst.y)
        _write_csv(os.path.join(directory, "theta_bar.csv"), inst.theta_bar)
        _write_csv(os.path.join(directory, "Sigma.csv"), inst.Sigma)
        if inst.X_corrupted is not None:
            _write_csv(os.path.join(directory, "X_corrupted.csv"), inst.X_corrupted)
        if inst.Sigma_W is not None:
            _write_csv(os.path.join(directory, "Sigma_W.csv"), inst.Sigma_W)
        if inst.mask is not None:
            np.savetxt(os.path.join(directory, "mask.csv"), inst.mask.astype(int), delimiter=",", fmt="%d")
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_instance(directory):
    """Inverse of :func:`save_instance`."""
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)

    def path(name):
        return os.path.join(directory, name)

    if meta["kind"] == "matrix":
        n, p1, p2 = meta["n"], meta["p1"], meta["p2"]
        return MatrixInstance(
            _read_csv(path("X.csv"), 2).reshape(n, p1, p2),
            _read_csv(path("y.csv"), 1),
            _read_csv(path("W_bar.csv"), 2),
            _read_csv(path("U0.csv"), 2),
            _read_csv(path("V0.csv"), 2),
            meta["noise_sigma"], meta["seed"], meta["stream_id"],
        )
    inst = ProblemInstance(
        X=_read_csv(path("X.csv"), 2),
        y=_read_csv(path("y.csv"), 1),
        theta_bar=_read_csv(path("theta_bar.csv"), 1),
        Sigma=_read_csv(path("Sigma.csv"), 2),
        noise_sigma=meta["noise_sigma"],
        covariance=CovarianceSpec(**meta["covariance"]),
        seed=meta["seed"],
        stream_id=meta["stream_id"],
        corruption=meta["corruption"],
        nu=meta.get("nu"),
        pairs=[tuple(pq) for pq in meta.get("pairs", [])],
    )
    if os.path.exists(path("X_corrupted.csv")):
        inst.X_corrupted = _read_csv(path("X_corrupted.csv"), 2)
    if os.path.exists(path("Sigma_W.csv")):
        inst.Sigma_W = _read_csv(path("Sigma_W.csv"), 2)
    if os.path.exists(path("mask.csv")):
        inst.mask = np.loadtxt(path("mask.csv"), delimiter=",", ndmin=2).astype(bool)
    return inst
