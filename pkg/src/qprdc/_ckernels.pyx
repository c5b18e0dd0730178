# cython: language_level=3
"""Compiled kernels: bivariate normal CDF, rectangle transition rows, MC cell counts."""

import numpy as np
cimport numpy as cnp

from ._pykernels import _cell_tables, _mc_chunk, _mc_layout
from cython.parallel cimport prange
from libc.math cimport asin, sin, sqrt, exp, erfc, fabs, fmax, fmin, M_PI

cnp.import_array()

cdef double TAIL_CLIP = 38.5
cdef double SQRT_TWO_PI = 2.5066282746310002
cdef double INV_SQRT2 = 0.7071067811865476

_x6, _w6 = np.polynomial.legendre.leggauss(6)
_x12, _w12 = np.polynomial.legendre.leggauss(12)
_x20, _w20 = np.polynomial.legendre.leggauss(20)


cdef inline double _ndtr(double x) noexcept nogil:
    return 0.5 * erfc(-x * INV_SQRT2)


ctypedef struct Nodes:
    int n
    double r
    double asr
    double a          # half of sqrt(1 - r^2), high-correlation branch
    double as_
    double sn[20]     # sin(asr (1 + x_i)) for the low-correlation branch
    double ic[20]     # 1 / (1 - sn_i^2)
    double xs[20]     # (a (1 + x_i))^2 for the high-correlation branch
    double rs[20]     # sqrt(1 - xs_i)
    double w[20]


cdef Nodes _make_nodes(double r):
    cdef Nodes nd
    cdef double ar = fabs(r)
    cdef int i
    if ar < 0.3:
        x, w = _x6, _w6
    elif ar < 0.75:
        x, w = _x12, _w12
    else:
        x, w = _x20, _w20
    nd.n = len(x)
    nd.r = r
    nd.asr = 0.5 * asin(fmin(fmax(r, -1.0), 1.0))
    nd.as_ = (1.0 - r) * (1.0 + r)
    nd.a = 0.5 * sqrt(fmax(nd.as_, 0.0))
    for i in range(nd.n):
        nd.w[i] = w[i]
        nd.sn[i] = sin(nd.asr * (1.0 + x[i]))
        nd.ic[i] = 1.0 / (1.0 - nd.sn[i] * nd.sn[i])
        nd.xs[i] = (nd.a * (1.0 + x[i])) ** 2
        nd.rs[i] = sqrt(1.0 - nd.xs[i])
    return nd


cdef double _bvnu(double h, double k, const Nodes* nd) noexcept nogil:
    cdef int i
    cdef double r = nd.r, ar = fabs(nd.r)
    cdef double hk, hs, bvn = 0.0
    cdef double as_, a, bs, c, d, b, sp, xs, ep, e, asr, lower
    if r == 0.0:
        return _ndtr(-h) * _ndtr(-k)
    if ar < 0.925:
        hk = h * k
        hs = 0.5 * (h * h + k * k)
        for i in range(nd.n):
            bvn += nd.w[i] * exp((nd.sn[i] * hk - hs) * nd.ic[i])
        return bvn * nd.asr / (2.0 * M_PI) + _ndtr(-h) * _ndtr(-k)
    if r < 0:
        k = -k
    hk = h * k
    if ar < 1.0:
        as_ = nd.as_
        a = 2.0 * nd.a
        bs = (h - k) * (h - k)
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        e = -0.5 * (bs / as_ + hk)
        if e > -100.0:
            bvn = a * exp(e) * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0
                                + c * d * as_ * as_ / 5.0)
        if hk > -100.0:
            b = sqrt(bs)
            sp = SQRT_TWO_PI * _ndtr(-b / a)
            bvn = bvn - exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        e = 0.0
        for i in range(nd.n):
            xs = nd.xs[i]
            asr = -0.5 * (bs / xs + hk)
            if asr > -100.0:
                sp = 1.0 + c * xs * (1.0 + d * xs)
                ep = exp(-(hk / 2.0) * xs / ((1.0 + nd.rs[i]) * (1.0 + nd.rs[i]))) / nd.rs[i]
                e += nd.w[i] * exp(asr) * (sp - ep)
        bvn = (nd.a * e - bvn) / (2.0 * M_PI)
    if r > 0:
        return bvn + _ndtr(-fmax(h, k))
    if h >= k:
        return -bvn
    if h < 0:
        lower = _ndtr(k) - _ndtr(h)
    else:
        lower = _ndtr(-h) - _ndtr(-k)
    return lower - bvn


cdef inline double _clip(double v) noexcept nogil:
    return fmin(fmax(v, -TAIL_CLIP), TAIL_CLIP)


cdef double _cdf(double u, double v, const Nodes* nd) noexcept nogil:
    cdef double p
    u = _clip(u)
    v = _clip(v)
    if nd.r >= 1.0:
        return _ndtr(fmin(u, v))
    if nd.r <= -1.0:
        return fmax(_ndtr(u) - _ndtr(-v), 0.0)
    p = _bvnu(-u, -v, nd)
    return fmin(fmax(p, 0.0), 1.0)


def bvn_cdf(u, v, double rho):
    """Vectorised F(u, v) = P(U <= u, V <= v) for correlation ``rho``."""
    ub, vb = np.broadcast_arrays(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64))
    shape = ub.shape
    cdef double[::1] uf = np.ascontiguousarray(ub).ravel()
    cdef double[::1] vf = np.ascontiguousarray(vb).ravel()
    out = np.empty(uf.shape[0])
    cdef double[::1] o = out
    cdef Nodes nd = _make_nodes(rho)
    cdef Py_ssize_t i
    with nogil:
        for i in range(uf.shape[0]):
            o[i] = _cdf(uf[i], vf[i], &nd)
    return out.reshape(shape)


def rect_probs(mean_x, mean_y, edges_x, edges_y, double sx, double sy, double rho,
               int threads=0):
    """Cell probabilities of a correlated Gaussian pair on an edge grid, per source mean.

    Returns shape (n_src, nx, ny). Rows are independent, so the result does not depend
    on ``threads``.
    """
    cdef double[::1] mx = np.ascontiguousarray(mean_x, dtype=np.float64)
    cdef double[::1] my = np.ascontiguousarray(mean_y, dtype=np.float64)
    cdef double[::1] ex = np.ascontiguousarray(edges_x, dtype=np.float64)
    cdef double[::1] ey = np.ascontiguousarray(edges_y, dtype=np.float64)
    cdef Py_ssize_t n_src = mx.shape[0], nx = ex.shape[0] - 1, ny = ey.shape[0] - 1
    out = np.empty((n_src, nx, ny))
    cdef double[:, :, ::1] o = out
    # per-thread corner buffers
    cdef int nthreads = threads if threads > 0 else 1
    buf = np.empty((n_src if n_src > 0 else 1, 2, ny + 1))
    cdef double[:, :, ::1] f = buf
    cdef Nodes nd = _make_nodes(rho)
    cdef Py_ssize_t s, a, b
    cdef double u, p
    cdef int cur, prev
    for s in prange(n_src, nogil=True, num_threads=nthreads, schedule="static"):
        # row a = 0 of the corner grid
        u = (ex[0] - mx[s]) / sx
        for b in range(ny + 1):
            f[s, 0, b] = _cdf(u, (ey[b] - my[s]) / sy, &nd)
        for a in range(1, nx + 1):
            cur = a % 2
            prev = 1 - cur
            u = (ex[a] - mx[s]) / sx
            for b in range(ny + 1):
                f[s, cur, b] = _cdf(u, (ey[b] - my[s]) / sy, &nd)
            for b in range(ny):
                p = f[s, cur, b + 1] - f[s, prev, b + 1] - f[s, cur, b] + f[s, prev, b]
                o[s, a - 1, b] = fmax(p, 0.0)
    return out


def mc_counts(base, increments, mids, int threads=0):
    """Arrival counts of ``base[s] + increments[m]`` in a product grid (up to 4 dims).

    Cell lookups go through per-dimension tables indexed by distinct base value (built
    with numpy's binary search); the compiled loop only gathers and counts.
    """
    if len(mids) < 1 or len(mids) > 4:
        raise ValueError("mc_counts supports 1 to 4 dimensions")
    bs, g, strides, n_dst, uniq = _mc_layout(base, increments, mids)
    if bs.shape[1] != len(mids) or g.shape[1] != len(mids):
        raise ValueError("base, increments and mids disagree on the dimension")
    cdef Py_ssize_t n_src = bs.shape[0], n_smp = g.shape[0]
    pad = 4 - len(mids)
    zero_inv = np.zeros(n_src, dtype=np.intp)
    inv = [np.ascontiguousarray(pos, dtype=np.intp) for _, pos in uniq] + [zero_inv] * pad
    cdef const Py_ssize_t[::1] a0 = inv[0]
    cdef const Py_ssize_t[::1] a1 = inv[1]
    cdef const Py_ssize_t[::1] a2 = inv[2]
    cdef const Py_ssize_t[::1] a3 = inv[3]
    out = np.zeros((n_src, n_dst), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef const int[:, ::1] t0
    cdef const int[:, ::1] t1
    cdef const int[:, ::1] t2
    cdef const int[:, ::1] t3
    cdef Py_ssize_t s, i, c, c0, c1
    cdef int nthreads = threads if threads > 0 else 1
    chunk = _mc_chunk(uniq)
    for c0 in range(0, n_smp, chunk):
        c1 = min(n_smp, c0 + chunk)
        c = c1 - c0
        tables = _cell_tables(uniq, g, mids, strides, c0, c1)
        tables += [np.zeros((1, c), dtype=np.int32)] * pad
        t0, t1, t2, t3 = [np.ascontiguousarray(tab) for tab in tables]
        for s in prange(n_src, nogil=True, num_threads=nthreads, schedule="static"):
            for i in range(c):
                o[s, t0[a0[s], i] + t1[a1[s], i] + t2[a2[s], i] + t3[a3[s], i]] += 1
    return out
