"""Hard-thresholding projections: sparse, partially sparse and low-rank."""
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .numkit import as_vector, svd, top_k_indices

__all__ = [
    "PartialProjectionSpec",
    "SparseProjection",
    "hard_threshold",
    "numerical_rank",
    "partial_hard_threshold",
    "rank_project",
]


@dataclass(frozen=True)
class SparseProjection:
    """Result of a sparse projection.

    ``support`` lists the retained nonzero coordinates in selection order
    (magnitude descending, index ascending); it may be shorter than ``s``
    when the input has fewer nonzeros.
    """

    values: np.ndarray
    support: np.ndarray
    s: int


@dataclass(frozen=True)
class PartialProjectionSpec:
    s: int
    ell: int
    support: tuple = ()

    def __post_init__(self):
        if self.s < 0 or self.ell < 0:
            raise ValueError("s and ell must be nonnegative")
        if self.ell > self.s:
            raise ValueError(f"ell={self.ell} exceeds s={self.s}")
        S = tuple(sorted({int(i) for i in self.support}))
        if len(S) > self.s:
            raise ValueError(f"|S|={len(S)} exceeds s={self.s}")
        object.__setattr__(self, "support", S)


def _embed(z, idx):
    out = np.zeros_like(z)
    out[idx] = z[idx]
    return out


def hard_threshold(z, s):
    """Keep the ``s`` largest-magnitude entries of ``z`` and zero the rest."""
    z = as_vector(z, "z")
    s = int(s)
    if not 0 <= s <= z.shape[0]:
        raise ValueError(f"s={s} out of range for a vector of length {z.shape[0]}")
    idx = top_k_indices(z, s)
    idx = idx[z[idx] != 0]
    return SparseProjection(_embed(z, idx), idx, s)


def partial_hard_threshold(z, spec):
    """Project ``z`` onto s-sparse vectors adding at most ``ell`` coordinates
    outside ``spec.support``.

    The selection scans coordinates by decreasing magnitude, admitting members
    of the current support freely and outside coordinates until ``ell`` of them
    are taken, stopping at ``s``. The feasible supports form a laminar matroid,
    so this greedy scan is the exact Euclidean projection; for ``|S| = s`` it
    coincides with thresholding ``S^c`` together with the ``ell`` smallest
    entries of ``z_S``.
    """
    z = as_vector(z, "z")
    if z.shape[0] < spec.s:
        raise ValueError(f"vector length {z.shape[0]} is smaller than s={spec.s}")
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite entries")
    mask = np.zeros(z.shape[0], dtype=np.uint8)
    if spec.support:
        S = np.asarray(spec.support, dtype=np.int64)
        if S[-1] >= z.shape[0] or S[0] < 0:
            raise ValueError("support index out of range")
        mask[S] = 1
    idx = kernels.partial_select(z, mask, spec.s, spec.ell)
    return SparseProjection(_embed(z, idx), idx, spec.s)


def rank_project(W, r):
    """Best rank-``r`` approximation of ``W`` in Frobenius norm."""
    W = np.asarray(W, dtype=np.float64)
    r = int(r)
    if W.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {W.shape}")
    if not 0 <= r <= min(W.shape):
        raise ValueError(f"rank {r} out of range for shape {W.shape}")
    if r == min(W.shape):
        return W.copy()
    U, sv, V = svd(W)
    return (U[:, :r] * sv[:r]) @ V[:, :r].T


def numerical_rank(W, rtol=1e-10):
    """Number of singular values above ``rtol * sigma_1``."""
    sv = svd(W).singular_values
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))
