# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled counting backend.

Counts rows into the four partition cells of every location pair without
touching every (row, pair) combination: rows are visited in x-distance
order so the x-ball condition becomes a prefix, and the y-ball marginal
comes from a histogram over the sorted y-radius bands of each center.
See ``_counting_py`` for the shared argument layout.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs

cnp.import_array()


cdef inline Py_ssize_t _lower_bound(const double *arr, Py_ssize_t m, double x) noexcept nogil:
    # first index in [0, m) with arr[idx] >= x
    cdef Py_ssize_t lo = 0, hi = m, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _center_counts(const double *dyrow, const cnp.int32_t *order, Py_ssize_t n,
                         const double *sty_g, const cnp.int64_t *a_g,
                         const double *ty_g, const cnp.int32_t *pos_g,
                         Py_ssize_t m, double *dyp, cnp.int64_t *cumhist,
                         cnp.int64_t *c11_g, cnp.int64_t *b_g) noexcept nogil:
    """Joint and y-marginal counts for all pairs sharing one center."""
    cdef Py_ssize_t t, r, key, aj
    cdef cnp.int64_t c11, cum
    cdef double tyj

    for t in range(m + 1):
        cumhist[t] = 0
    for t in range(n):
        dyp[t] = dyrow[order[t]]
        key = _lower_bound(sty_g, m, dyrow[t])
        cumhist[key] += 1
    cum = 0
    for t in range(m + 1):
        cum += cumhist[t]
        cumhist[t] = cum

    for t in range(m):
        aj = a_g[t]
        tyj = ty_g[t]
        c11 = 0
        for r in range(aj):
            c11 += dyp[r] <= tyj
        c11_g[t] = c11
        b_g[t] = cumhist[pos_g[t]]


def cell_counts_all(const double[:, ::1] dxT, const double[:, ::1] dyT,
                    const cnp.int32_t[:, ::1] orderT, const cnp.int64_t[::1] indptr,
                    const cnp.int64_t[::1] a, const double[::1] tx,
                    const double[::1] ty, const double[::1] sty,
                    const cnp.int32_t[::1] pos):
    """Cell counts (c11, c12, c21, c22) of one sample for every pair."""
    cdef Py_ssize_t k = dyT.shape[0]
    cdef Py_ssize_t n = dyT.shape[1]
    cdef Py_ssize_t npairs = ty.shape[0]

    out = np.empty((npairs, 4), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] ov = out
    cdef Py_ssize_t maxm = 0, i, s, e, m, t
    for i in range(k):
        if indptr[i + 1] - indptr[i] > maxm:
            maxm = indptr[i + 1] - indptr[i]
    if npairs == 0:
        return out

    dyp_arr = np.empty(n, dtype=np.float64)
    hist_arr = np.empty(maxm + 1, dtype=np.int64)
    c11_arr = np.empty(maxm, dtype=np.int64)
    b_arr = np.empty(maxm, dtype=np.int64)
    cdef double[::1] dyp = dyp_arr
    cdef cnp.int64_t[::1] cumhist = hist_arr
    cdef cnp.int64_t[::1] c11_g = c11_arr
    cdef cnp.int64_t[::1] b_g = b_arr
    cdef cnp.int64_t c11, bj, aj

    for i in range(k):
        s = indptr[i]
        e = indptr[i + 1]
        if s == e:
            continue
        m = e - s
        _center_counts(&dyT[i, 0], &orderT[i, 0], n, &sty[s], &a[s], &ty[s],
                       &pos[s], m, &dyp[0], &cumhist[0], &c11_g[0], &b_g[0])
        for t in range(m):
            c11 = c11_g[t]
            bj = b_g[t]
            aj = a[s + t]
            ov[s + t, 0] = c11
            ov[s + t, 1] = bj - c11
            ov[s + t, 2] = aj - c11
            ov[s + t, 3] = n - aj - bj + c11
    return out


def local_stats_1d(const double[::1] y, const double[::1] ys_sorted,
                   const double[::1] vs, const cnp.int32_t[:, ::1] orderT,
                   const cnp.int64_t[::1] indptr, const cnp.int64_t[::1] a,
                   const double[::1] ty, const double[::1] sty,
                   const cnp.int32_t[::1] tyorder,
                   const cnp.int64_t[:, ::1] ref_counts):
    """Scalar-response fast path of :func:`local_stats`.

    y-distances to a center v are |y - v|, so walking the sorted response
    values outward from v yields them in ascending order; the y-marginals
    then come from a single merge against the sorted radii instead of a
    binary search per row.  Distances are evaluated with the same
    subtract-and-abs expression as the generic path, keeping every
    comparison (and therefore every count) bit-identical.
    """
    cdef Py_ssize_t k = vs.shape[0]
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t npairs = ty.shape[0]

    out = np.empty(npairs, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t maxm = 0, i, s, e, m, t, u, lo, hi, mid, left, right, consumed
    for i in range(k):
        if indptr[i + 1] - indptr[i] > maxm:
            maxm = indptr[i + 1] - indptr[i]
    if npairs == 0:
        return out

    dyp_arr = np.empty(n, dtype=np.float64)
    c11_arr = np.empty(maxm, dtype=np.int64)
    b_arr = np.empty(maxm, dtype=np.int64)
    cdef double[::1] dyp = dyp_arr
    cdef cnp.int64_t[::1] c11_g = c11_arr
    cdef cnp.int64_t[::1] b_g = b_arr

    cdef cnp.int64_t q0, q1, q2, q3, d, r, c11, aj
    cdef double sval, v, dl, dr, tyj

    for i in range(k):
        s = indptr[i]
        e = indptr[i + 1]
        if s == e:
            continue
        m = e - s
        v = vs[i]
        for t in range(n):
            dyp[t] = fabs(y[orderT[i, t]] - v)

        # first sorted response >= v
        lo = 0
        hi = n
        while lo < hi:
            mid = (lo + hi) >> 1
            if ys_sorted[mid] < v:
                lo = mid + 1
            else:
                hi = mid
        left = lo - 1
        right = lo
        consumed = 0
        # pairs in ascending-radius order share one outward sweep
        for t in range(m):
            tyj = sty[s + t]
            while consumed < n:
                dl = fabs(ys_sorted[left] - v) if left >= 0 else INFINITY
                dr = fabs(ys_sorted[right] - v) if right < n else INFINITY
                if dl < dr:
                    if dl > tyj:
                        break
                    left -= 1
                else:
                    if dr > tyj:
                        break
                    right += 1
                consumed += 1
            b_g[tyorder[s + t]] = consumed

        for t in range(m):
            aj = a[s + t]
            tyj = ty[s + t]
            c11 = 0
            for u in range(aj):
                c11 += dyp[u] <= tyj
            c11_g[t] = c11

        for t in range(m):
            u = s + t
            q0 = c11_g[t]
            q1 = b_g[t] - q0
            q2 = a[u] - q0
            q3 = n - a[u] - b_g[t] + q0
            sval = 0.0
            d = ref_counts[u, 0] - q0
            r = ref_counts[u, 0] + q0
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 1] - q1
            r = ref_counts[u, 1] + q1
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 2] - q2
            r = ref_counts[u, 2] + q2
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 3] - q3
            r = ref_counts[u, 3] + q3
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            ov[u] = sval
    return out


def local_stats(const double[:, ::1] dxT, const double[:, ::1] dyT,
                const cnp.int32_t[:, ::1] orderT, const cnp.int64_t[::1] indptr,
                const cnp.int64_t[::1] a, const double[::1] tx,
                const double[::1] ty, const double[::1] sty,
                const cnp.int32_t[::1] pos, const cnp.int64_t[:, ::1] ref_counts):
    """Per-pair statistics of this sample counted against fixed reference counts."""
    cdef Py_ssize_t k = dyT.shape[0]
    cdef Py_ssize_t n = dyT.shape[1]
    cdef Py_ssize_t npairs = ty.shape[0]

    out = np.empty(npairs, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t maxm = 0, i, s, e, m, t, u
    for i in range(k):
        if indptr[i + 1] - indptr[i] > maxm:
            maxm = indptr[i + 1] - indptr[i]
    if npairs == 0:
        return out

    dyp_arr = np.empty(n, dtype=np.float64)
    hist_arr = np.empty(maxm + 1, dtype=np.int64)
    c11_arr = np.empty(maxm, dtype=np.int64)
    b_arr = np.empty(maxm, dtype=np.int64)
    cdef double[::1] dyp = dyp_arr
    cdef cnp.int64_t[::1] cumhist = hist_arr
    cdef cnp.int64_t[::1] c11_g = c11_arr
    cdef cnp.int64_t[::1] b_g = b_arr

    cdef cnp.int64_t q0, q1, q2, q3, d, r
    cdef double sval

    for i in range(k):
        s = indptr[i]
        e = indptr[i + 1]
        if s == e:
            continue
        m = e - s
        _center_counts(&dyT[i, 0], &orderT[i, 0], n, &sty[s], &a[s], &ty[s],
                       &pos[s], m, &dyp[0], &cumhist[0], &c11_g[0], &b_g[0])
        for t in range(m):
            u = s + t
            q0 = c11_g[t]
            q1 = b_g[t] - q0
            q2 = a[u] - q0
            q3 = n - a[u] - b_g[t] + q0
            sval = 0.0
            d = ref_counts[u, 0] - q0
            r = ref_counts[u, 0] + q0
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 1] - q1
            r = ref_counts[u, 1] + q1
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 2] - q2
            r = ref_counts[u, 2] + q2
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            d = ref_counts[u, 3] - q3
            r = ref_counts[u, 3] + q3
            if r > 0:
                sval += (<double> (d * d)) / (<double> r)
            ov[u] = sval
    return out
