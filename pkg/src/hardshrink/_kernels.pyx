# distutils: language = c++
"""Compiled selection kernels (same contracts as ``_kernels_py``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport copysign, fabs
from libc.stdint cimport int64_t
from libcpp.vector cimport vector

cnp.import_array()

cdef extern from *:
    """
    #include <algorithm>
    #include <cmath>
    #include <cstdint>
    #include <functional>
    #include <vector>
    struct MagIdx { double mag; int64_t idx; };
    static inline bool magidx_before(const MagIdx& a, const MagIdx& b) {
        return a.mag > b.mag || (a.mag == b.mag && a.idx < b.idx);
    }
    // Top-k of n (magnitude, index) candidates in any order, sorted.
    // Small k keeps a bounded heap whose front is the worst kept entry, so
    // after warm-up almost every candidate costs one predictable comparison.
    // Large k finds the k-th magnitude with nth_element instead; ties at the
    // cut keep the lowest indices.
    static void select_top(const double* mag, const int64_t* idx, int64_t n, int64_t k,
                           std::vector<MagIdx>& out) {
        out.clear();
        if (k <= 0 || n <= 0) return;
        if (k > n) k = n;
        out.reserve(k);
        if (k == n) {
            for (int64_t i = 0; i < n; ++i) out.push_back(MagIdx{mag[i], idx[i]});
        } else if (8 * k <= n) {
            for (int64_t i = 0; i < k; ++i) out.push_back(MagIdx{mag[i], idx[i]});
            std::make_heap(out.begin(), out.end(), magidx_before);
            for (int64_t i = k; i < n; ++i) {
                const MagIdx c{mag[i], idx[i]};
                if (magidx_before(c, out.front())) {
                    std::pop_heap(out.begin(), out.end(), magidx_before);
                    out.back() = c;
                    std::push_heap(out.begin(), out.end(), magidx_before);
                }
            }
        } else {
            std::vector<double> tmp(mag, mag + n);
            std::nth_element(tmp.begin(), tmp.begin() + (k - 1), tmp.end(), std::greater<double>());
            const double kth = tmp[k - 1];
            std::vector<int64_t> ties;
            for (int64_t i = 0; i < n; ++i) {
                if (mag[i] > kth) out.push_back(MagIdx{mag[i], idx[i]});
                else if (mag[i] == kth) ties.push_back(idx[i]);
            }
            const size_t need = static_cast<size_t>(k) - out.size();
            std::partial_sort(ties.begin(), ties.begin() + need, ties.end());
            for (size_t j = 0; j < need; ++j) out.push_back(MagIdx{kth, ties[j]});
        }
        std::sort(out.begin(), out.end(), magidx_before);
    }
    // top_k over |v|: the heap path reads v directly, skipping the copies
    static void top_abs(const double* v, int64_t n, int64_t k, std::vector<MagIdx>& out) {
        out.clear();
        if (k <= 0 || n <= 0) return;
        if (k > n) k = n;
        if (8 * k > n) {
            std::vector<double> mag(n);
            std::vector<int64_t> idx(n);
            for (int64_t i = 0; i < n; ++i) { mag[i] = std::fabs(v[i]); idx[i] = i; }
            select_top(mag.data(), idx.data(), n, k, out);
            return;
        }
        out.reserve(k);
        for (int64_t i = 0; i < k; ++i) out.push_back(MagIdx{std::fabs(v[i]), i});
        std::make_heap(out.begin(), out.end(), magidx_before);
        double worst = out.front().mag;
        for (int64_t i = k; i < n; ++i) {
            const double a = std::fabs(v[i]);
            // later indices lose ties, so only a strictly larger magnitude enters
            if (a > worst) {
                std::pop_heap(out.begin(), out.end(), magidx_before);
                out.back() = MagIdx{a, i};
                std::push_heap(out.begin(), out.end(), magidx_before);
                worst = out.front().mag;
            }
        }
        std::sort(out.begin(), out.end(), magidx_before);
    }
    """
    ctypedef struct MagIdx:
        double mag
        int64_t idx
    void select_top(const double* mag, const int64_t* idx, int64_t n, int64_t k,
                    vector[MagIdx]& out) nogil
    void top_abs(const double* v, int64_t n, int64_t k, vector[MagIdx]& out) nogil


def top_k(const double[::1] v, Py_ssize_t k):
    cdef Py_ssize_t p = v.shape[0], i
    if k <= 0 or p == 0:
        return np.empty(0, dtype=np.int64)
    cdef vector[MagIdx] best
    with nogil:
        top_abs(&v[0], p, k, best)
    out = np.empty(best.size(), dtype=np.int64)
    cdef int64_t[::1] o = out
    for i in range(<Py_ssize_t>best.size()):
        o[i] = best[i].idx
    return out


def partial_select(const double[::1] z, const unsigned char[::1] in_support,
                   Py_ssize_t s, Py_ssize_t ell):
    cdef Py_ssize_t p = z.shape[0], i
    cdef double a
    cdef vector[double] kept_mag, off_mag
    cdef vector[int64_t] kept_idx, off_idx
    cdef vector[MagIdx] best
    with nogil:
        for i in range(p):
            a = fabs(z[i])
            if a == 0.0:
                continue
            if in_support[i]:
                kept_mag.push_back(a)
                kept_idx.push_back(i)
            else:
                off_mag.push_back(a)
                off_idx.push_back(i)
        select_top(off_mag.data(), off_idx.data(), off_mag.size(), ell, best)
        for i in range(<Py_ssize_t>best.size()):
            kept_mag.push_back(best[i].mag)
            kept_idx.push_back(best[i].idx)
        select_top(kept_mag.data(), kept_idx.data(), kept_mag.size(), s, best)
    out = np.empty(best.size(), dtype=np.int64)
    cdef int64_t[::1] o = out
    for i in range(<Py_ssize_t>best.size()):
        o[i] = best[i].idx
    return out


def soft_threshold(const double[::1] x, double t):
    cdef Py_ssize_t n = x.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double a
    with nogil:
        # branch-free so random signs do not stall the pipeline
        for i in range(n):
            a = fabs(x[i]) - t
            o[i] = copysign(a if a > 0.0 else 0.0, x[i])
    return out
