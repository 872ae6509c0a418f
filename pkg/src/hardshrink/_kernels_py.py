"""Numpy implementations of the selection kernels.

Used whenever the compiled ``_kernels`` extension is unavailable, and as the
reference the extension is tested against. Every routine orders indices by
magnitude descending, then index ascending.
"""
import numpy as np


def _ordered(idx, mag):
    return idx[np.lexsort((idx, -mag[idx]))]


def top_k(v, k):
    a = np.abs(v)
    p = a.shape[0]
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k >= p:
        return _ordered(np.arange(p, dtype=np.int64), a)
    kth = np.partition(a, p - k)[p - k]
    above = np.flatnonzero(a > kth)
    ties = np.flatnonzero(a == kth)[: k - above.shape[0]]
    return _ordered(np.concatenate([above, ties]).astype(np.int64), a)


def partial_select(z, in_support, s, ell):
    a = np.abs(z)
    mask = in_support.astype(bool)
    kept = np.flatnonzero(mask & (a > 0))
    off = np.where(mask, 0.0, a)
    new = top_k(off, ell)
    new = new[off[new] > 0]
    cand = np.concatenate([kept, new]).astype(np.int64)
    return _ordered(cand, a)[:s]


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)
