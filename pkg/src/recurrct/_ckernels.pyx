# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor, INFINITY

cnp.import_array()


def nn_maxnorm(points):
    cdef double[:, ::1] y = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0], dim = y.shape[1]
    idx_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] dist = dist_arr
    cdef Py_ssize_t i, j, c, best
    cdef double d, diff, bestd
    with nogil:
        for i in range(n):
            bestd = INFINITY
            best = -1
            for j in range(n):
                if j == i:
                    continue
                d = 0.0
                for c in range(dim):
                    diff = fabs(y[i, c] - y[j, c])
                    if diff > d:
                        d = diff
                    if d >= bestd:
                        break
                if d < bestd:
                    bestd = d
                    best = j
            idx[i] = best
            dist[i] = bestd
    return idx_arr, dist_arr


def line_histograms(binary):
    cdef cnp.uint8_t[:, ::1] r = np.ascontiguousarray(binary, dtype=np.uint8)
    cdef Py_ssize_t k = r.shape[0]
    diag_arr = np.zeros(k + 1, dtype=np.int64)
    vert_arr = np.zeros(k + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] diag = diag_arr
    cdef cnp.int64_t[::1] vert = vert_arr
    cdef Py_ssize_t off, i, run, col
    with nogil:
        for off in range(1, k):
            run = 0
            for i in range(k - off):
                if r[i, i + off]:
                    run += 1
                elif run:
                    diag[run] += 1
                    run = 0
            if run:
                diag[run] += 1
            run = 0
            for i in range(k - off):
                if r[i + off, i]:
                    run += 1
                elif run:
                    diag[run] += 1
                    run = 0
            if run:
                diag[run] += 1
        for col in range(k):
            run = 0
            for i in range(k):
                if r[i, col]:
                    run += 1
                elif run:
                    vert[run] += 1
                    run = 0
            if run:
                vert[run] += 1
    return diag_arr, vert_arr


def bilinear_resize(img, int target):
    cdef double[:, ::1] a = np.ascontiguousarray(img, dtype=np.float64)
    cdef Py_ssize_t k = a.shape[0]
    out_arr = np.empty((target, target), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    i0_arr = np.empty(target, dtype=np.int64)
    f_arr = np.empty(target, dtype=np.float64)
    cdef cnp.int64_t[::1] i0 = i0_arr
    cdef double[::1] f = f_arr
    cdef Py_ssize_t t, u, y0, y1, x0, x1, lim = k - 2 if k >= 2 else 0
    cdef double src, fy, fx, top, bot
    for t in range(target):
        src = <double>t * (k - 1) / (target - 1)
        y0 = <Py_ssize_t>floor(src)
        if y0 > lim:
            y0 = lim
        i0[t] = y0
        f[t] = src - y0
    with nogil:
        for t in range(target):
            y0 = i0[t]
            y1 = y0 + 1 if y0 + 1 < k else k - 1
            fy = f[t]
            for u in range(target):
                x0 = i0[u]
                x1 = x0 + 1 if x0 + 1 < k else k - 1
                fx = f[u]
                top = a[y0, x0] * (1.0 - fx) + a[y0, x1] * fx
                bot = a[y1, x0] * (1.0 - fx) + a[y1, x1] * fx
                out[t, u] = top * (1.0 - fy) + bot * fy
    return out_arr


cdef inline void _valid_range(Py_ssize_t j, Py_ssize_t s, Py_ssize_t p, Py_ssize_t n, Py_ssize_t no,
                              Py_ssize_t* lo, Py_ssize_t* hi) noexcept nogil:
    # output positions u in [lo, hi) whose input index j + s*u - p lies in [0, n)
    lo[0] = 0 if p - j <= 0 else (p - j + s - 1) // s
    if n - 1 + p - j < 0:
        hi[0] = 0
    else:
        hi[0] = (n - 1 + p - j) // s + 1
        if hi[0] > no:
            hi[0] = no
    if lo[0] > hi[0]:
        lo[0] = hi[0]


# Non-overlapping windows (kernel == stride, no padding): every input pixel
# feeds exactly one patch entry, so im2col and col2im are permutations.

cdef _space_to_depth(const double[:, :, :, ::1] x, Py_ssize_t k):
    cdef Py_ssize_t c = x.shape[0], b = x.shape[1], ho = x.shape[2] // k, wo = x.shape[3] // k
    out_arr = np.empty((c * k * k, b * ho * wo), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t ci, bi, y, i, j, u, base
    cdef const double* src
    cdef double* dst
    with nogil:
        for ci in range(c):
            for bi in range(b):
                for y in range(ho):
                    base = (bi * ho + y) * wo
                    for i in range(k):
                        src = &x[ci, bi, y * k + i, 0]
                        for j in range(k):
                            dst = &out[(ci * k + i) * k + j, base]
                            for u in range(wo):
                                dst[u] = src[u * k + j]
    return out_arr


cdef _depth_to_space(const double[:, ::1] cm, Py_ssize_t c, Py_ssize_t b, Py_ssize_t ho,
                     Py_ssize_t wo, Py_ssize_t k):
    out_arr = np.empty((c, b, ho * k, wo * k), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out_arr
    cdef Py_ssize_t ci, bi, y, i, j, u, base
    cdef const double* src
    cdef double* dst
    with nogil:
        for ci in range(c):
            for bi in range(b):
                for y in range(ho):
                    base = (bi * ho + y) * wo
                    for i in range(k):
                        dst = &o[ci, bi, y * k + i, 0]
                        for j in range(k):
                            src = &cm[(ci * k + i) * k + j, base]
                            for u in range(wo):
                                dst[u * k + j] = src[u]
    return out_arr


def im2col(xin, int k, int s, int p, int ho, int wo):
    cdef double[:, :, :, ::1] x = np.ascontiguousarray(xin, dtype=np.float64)
    cdef Py_ssize_t c = x.shape[0], b = x.shape[1], h = x.shape[2], w = x.shape[3]
    if k == s and p == 0 and h == k * ho and w == k * wo:
        return _space_to_depth(x, k)
    out_arr = np.zeros((c * k * k, b * ho * wo), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, bi, y, u, row, base, yy, ulo, uhi
    cdef const double* src
    cdef double* dst
    # one input plane at a time so it stays in cache across the k*k taps
    with nogil:
        for ci in range(c):
            for bi in range(b):
                for i in range(k):
                    for j in range(k):
                        row = (ci * k + i) * k + j
                        _valid_range(j, s, p, w, wo, &ulo, &uhi)
                        for y in range(ho):
                            yy = i + s * y - p
                            if yy < 0 or yy >= h:
                                continue
                            base = (bi * ho + y) * wo
                            src = &x[ci, bi, yy, 0]
                            dst = &out[row, base]
                            for u in range(ulo, uhi):
                                dst[u] = src[j - p + s * u]
    return out_arr


def col2im(cols, shape, int k, int s, int p, int ho, int wo):
    cdef double[:, ::1] cm = np.ascontiguousarray(cols, dtype=np.float64)
    cdef Py_ssize_t c = shape[0], b = shape[1], h = shape[2], w = shape[3]
    if k == s and p == 0 and h == k * ho and w == k * wo:
        return _depth_to_space(cm, c, b, ho, wo, k)
    out_arr = np.zeros((c, b, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] o = out_arr
    cdef Py_ssize_t ci, i, j, bi, y, u, row, base, yy, ulo, uhi
    cdef const double* src
    cdef double* dst
    # per output plane, taps accumulate in the numpy fallback's (i, j) order,
    # so every sum rounds identically
    with nogil:
        for ci in range(c):
            for bi in range(b):
                for i in range(k):
                    for j in range(k):
                        row = (ci * k + i) * k + j
                        _valid_range(j, s, p, w, wo, &ulo, &uhi)
                        for y in range(ho):
                            yy = i + s * y - p
                            if yy < 0 or yy >= h:
                                continue
                            base = (bi * ho + y) * wo
                            src = &cm[row, base]
                            dst = &o[ci, bi, yy, 0]
                            for u in range(ulo, uhi):
                                dst[j - p + s * u] += src[u]
    return out_arr


# --------------------------------------------------------- separable filter
# Every output sums its taps in increasing order, like the numpy fallback;
# innermost loops run along contiguous rows.

cdef void _rows(const double[:, ::1] a, const double[::1] t, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t h = out.shape[0], wv = out.shape[1], n = t.shape[0], y, u, kk
    cdef double tk
    for y in range(h):
        for u in range(wv):
            out[y, u] = 0.0
        for kk in range(n):
            tk = t[kk]
            for u in range(wv):
                out[y, u] = out[y, u] + tk * a[y, u + kk]


cdef void _cols(const double[:, ::1] a, const double[::1] t, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t hv = out.shape[0], wv = out.shape[1], n = t.shape[0], y, u, kk
    cdef double tk
    for y in range(hv):
        for u in range(wv):
            out[y, u] = 0.0
        for kk in range(n):
            tk = t[kk]
            for u in range(wv):
                out[y, u] = out[y, u] + tk * a[y + kk, u]


cdef void _cols_adj(const double[:, ::1] m, const double[::1] t, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t hv = m.shape[0], wv = m.shape[1], h = out.shape[0], n = t.shape[0]
    cdef Py_ssize_t r, u, kk, lo, hi
    cdef double tk
    for r in range(h):
        lo = r - hv + 1 if r - hv + 1 > 0 else 0
        hi = r if r < n - 1 else n - 1
        for u in range(wv):
            out[r, u] = 0.0
        for kk in range(lo, hi + 1):
            tk = t[kk]
            for u in range(wv):
                out[r, u] = out[r, u] + tk * m[r - kk, u]


cdef void _rows_adj(const double[:, ::1] m, const double[::1] t, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t h = m.shape[0], wv = m.shape[1], w = out.shape[1], n = t.shape[0], r, u, kk
    cdef double tk
    for r in range(h):
        for u in range(w):
            out[r, u] = 0.0
        for kk in range(n):
            tk = t[kk]
            for u in range(wv):
                out[r, u + kk] = out[r, u + kk] + tk * m[r, u]


def _planes(a):
    arr = np.asarray(a, dtype=np.float64)
    return arr.shape[:arr.ndim - 2], np.ascontiguousarray(arr.reshape((-1,) + arr.shape[arr.ndim - 2:]))


def sep_filter(a, taps):
    lead, xa = _planes(a)
    cdef double[:, :, ::1] x = xa
    cdef const double[::1] t = np.ascontiguousarray(taps, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], p = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t hv = h - n + 1, wv = w - n + 1, q
    out_arr = np.empty((p, hv, wv), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] rows = np.empty((h, wv), dtype=np.float64)
    with nogil:
        for q in range(p):
            _rows(x[q], t, rows)
            _cols(rows, t, out[q])
    return out_arr.reshape(lead + (hv, wv))


def sep_filter_adjoint(m, taps):
    lead, xa = _planes(m)
    cdef double[:, :, ::1] x = xa
    cdef const double[::1] t = np.ascontiguousarray(taps, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], p = x.shape[0], hv = x.shape[1], wv = x.shape[2]
    cdef Py_ssize_t h = hv + n - 1, w = wv + n - 1, q
    out_arr = np.empty((p, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] cols = np.empty((h, wv), dtype=np.float64)
    with nogil:
        for q in range(p):
            _cols_adj(x[q], t, cols)
            _rows_adj(cols, t, out[q])
    return out_arr.reshape(lead + (h, w))


def ssim_terms(xin, yin, taps, double c1, double c2, bint grad=True):
    lead, xa = _planes(xin)
    _, ya = _planes(yin)
    cdef double[:, :, ::1] x = xa
    cdef double[:, :, ::1] y = ya
    cdef const double[::1] t = np.ascontiguousarray(taps, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], p = x.shape[0], h = x.shape[1], w = x.shape[2]
    cdef Py_ssize_t hv = h - n + 1, wv = w - n + 1, q, i, j, k
    s_arr = np.empty((p, hv, wv), dtype=np.float64)
    g_arr = np.empty((p, h, w), dtype=np.float64) if grad else None
    cdef double[:, :, ::1] s = s_arr
    cdef double[:, :, ::1] g
    if grad:
        g = g_arr
    cdef double[:, ::1] prod = np.empty((h, w), dtype=np.float64)
    cdef double[:, ::1] rows = np.empty((h, wv), dtype=np.float64)
    cdef double[:, :, ::1] mom = np.empty((5, hv, wv), dtype=np.float64)
    cdef double[:, :, ::1] d = np.empty((3, hv, wv), dtype=np.float64)
    cdef double[:, :, ::1] adj = np.empty((3, h, w), dtype=np.float64)
    cdef double nv = <double>(hv * wv)
    cdef double mx, my, exx, eyy, exy, a1, a2, b1, b2, sv
    with nogil:
        for q in range(p):
            # moments in the order mx, my, exx, eyy, exy
            _rows(x[q], t, rows)
            _cols(rows, t, mom[0])
            _rows(y[q], t, rows)
            _cols(rows, t, mom[1])
            for k in range(3):
                for i in range(h):
                    for j in range(w):
                        if k == 0:
                            prod[i, j] = x[q, i, j] * x[q, i, j]
                        elif k == 1:
                            prod[i, j] = y[q, i, j] * y[q, i, j]
                        else:
                            prod[i, j] = x[q, i, j] * y[q, i, j]
                _rows(prod, t, rows)
                _cols(rows, t, mom[2 + k])
            for i in range(hv):
                for j in range(wv):
                    mx = mom[0, i, j]
                    my = mom[1, i, j]
                    exx = mom[2, i, j]
                    eyy = mom[3, i, j]
                    exy = mom[4, i, j]
                    a1 = 2.0 * mx * my + c1
                    a2 = 2.0 * (exy - mx * my) + c2
                    b1 = mx * mx + my * my + c1
                    b2 = (exx - mx * mx) + (eyy - my * my) + c2
                    sv = (a1 * a2) / (b1 * b2)
                    s[q, i, j] = sv
                    if grad:
                        d[0, i, j] = sv * (2.0 * mx / a1 - 2.0 * mx / a2 - 2.0 * my / b1 + 2.0 * my / b2) / nv
                        d[1, i, j] = -sv / b2 / nv
                        d[2, i, j] = sv * (2.0 / a2) / nv
            if not grad:
                continue
            for k in range(3):
                _cols_adj(d[k], t, rows)
                _rows_adj(rows, t, adj[k])
            for i in range(h):
                for j in range(w):
                    g[q, i, j] = adj[0, i, j] + 2.0 * y[q, i, j] * adj[1, i, j] + x[q, i, j] * adj[2, i, j]
    s_out = s_arr.reshape(lead + (hv, wv))
    return s_out, (g_arr.reshape(lead + (h, w)) if grad else None)
