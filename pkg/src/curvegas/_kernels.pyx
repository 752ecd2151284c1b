# cython: language_level=3, boundscheck=False, wraparound=False
# cython: cdivision=True, initializedcheck=False
"""Compiled hot kernels; same contract as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log, cos, sin, fmod, floor, nearbyint, isfinite, INFINITY, NAN
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

from ._kernels_py import (reduce_positions, table_offset, theta_of, fourier_eval,
                          frames, chord_matrix, min_gaps, quotient_rows)
from ._kernels_py import SDE_SALT, MCMC_SALT

cnp.import_array()

BACKEND = "cython"

cdef double TWO_PI = 6.283185307179586
cdef double TINY_CHORD = 1e-300
cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t INC = 0x632BE59BD9B4E019ULL
cdef double INV53 = 1.0 / 9007199254740992.0


cdef struct Curve:
    double length
    double scale
    double step
    double* p
    double* dp
    int table_n
    int64_t* ks
    double* cre
    double* cim
    int n_modes
    int exact


cdef class _CurveHandle:
    """Keeps the numpy buffers alive while a ``Curve`` struct points into them."""
    cdef Curve c
    cdef object _keep

    def __cinit__(self, kc):
        cdef double[::1] p = np.array(kc.p, dtype=np.float64)
        cdef double[::1] dp = np.array(kc.dp, dtype=np.float64)
        cdef int64_t[::1] ks = np.array(kc.ks, dtype=np.int64)
        cs = np.ascontiguousarray(kc.cs, dtype=np.complex128)
        cdef double[::1] cre = np.array(cs.real)
        cdef double[::1] cim = np.array(cs.imag)
        self._keep = (p, dp, ks, cre, cim)
        self.c.length = kc.length
        self.c.scale = kc.scale
        self.c.step = kc.step
        self.c.p = &p[0]
        self.c.dp = &dp[0]
        self.c.table_n = p.shape[0]
        self.c.ks = &ks[0]
        self.c.cre = &cre[0]
        self.c.cim = &cim[0]
        self.c.n_modes = ks.shape[0]
        self.c.exact = kc.exact


# ------------------------------------------------------------------ RNG

cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline uint64_t _hash(uint64_t seed, uint64_t a, uint64_t b, uint64_t c,
                           uint64_t d, uint64_t lane) nogil:
    cdef uint64_t h = _mix(seed ^ GOLDEN)
    h = _mix(h + a * GOLDEN + INC)
    h = _mix(h + b * GOLDEN + INC)
    h = _mix(h + c * GOLDEN + INC)
    h = _mix(h + d * GOLDEN + INC)
    h = _mix(h + lane * GOLDEN + INC)
    return h


cdef inline double _uniform(uint64_t seed, uint64_t a, uint64_t b, uint64_t c,
                            uint64_t d, uint64_t lane) nogil:
    return <double>(_hash(seed, a, b, c, d, lane) >> 11) * INV53


cdef inline double _normal(uint64_t seed, uint64_t a, uint64_t b, uint64_t c,
                           uint64_t d) nogil:
    cdef double u1 = 1.0 - _uniform(seed, a, b, c, d, 0)
    cdef double u2 = _uniform(seed, a, b, c, d, 1)
    return sqrt(-2.0 * log(u1)) * cos(TWO_PI * u2)


def uniforms(seed, a, b, c, d, lane):
    bs = np.broadcast(np.asarray(seed, dtype=np.uint64), np.asarray(a, dtype=np.uint64),
                      np.asarray(b, dtype=np.uint64), np.asarray(c, dtype=np.uint64),
                      np.asarray(d, dtype=np.uint64), np.asarray(lane, dtype=np.uint64))
    out = np.empty(bs.shape)
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i = 0
    for vals in bs:
        o[i] = _uniform(vals[0], vals[1], vals[2], vals[3], vals[4], vals[5])
        i += 1
    return out


def normals(seed, a, b, c, d):
    bs = np.broadcast(np.asarray(seed, dtype=np.uint64), np.asarray(a, dtype=np.uint64),
                      np.asarray(b, dtype=np.uint64), np.asarray(c, dtype=np.uint64),
                      np.asarray(d, dtype=np.uint64))
    out = np.empty(bs.shape)
    cdef double[::1] o = out.reshape(-1)
    cdef Py_ssize_t i = 0
    for vals in bs:
        o[i] = _normal(vals[0], vals[1], vals[2], vals[3], vals[4])
        i += 1
    return out


# ------------------------------------------------------------------ curve

cdef inline double _reduce(const Curve* cv, double x) nogil:
    cdef double r = fmod(x, cv.length)
    if r != 0.0 and r < 0.0:
        r += cv.length
    if r >= cv.length:
        r = 0.0
    return r


cdef inline double _offset(const Curve* cv, double r) nogil:
    if cv.exact:
        return 0.0
    cdef double u = r / cv.step
    cdef int64_t idx = <int64_t>floor(u)
    if idx > cv.table_n - 2:
        idx = cv.table_n - 2
    cdef double t = u - idx
    cdef double t1 = 1.0 - t
    return ((1.0 + 2.0 * t) * t1 * t1 * cv.p[idx] + t * t1 * t1 * (cv.dp[idx] * cv.step)
            + t * t * (3.0 - 2.0 * t) * cv.p[idx + 1]
            + t * t * (t - 1.0) * (cv.dp[idx + 1] * cv.step))


cdef inline void _frame(const Curve* cv, double x, double* theta, double* off,
                        double* tre, double* tim) nogil:
    """Reduced theta, table offset and unit tangent at position x."""
    cdef double r = _reduce(cv, x)
    cdef double o = _offset(cv, r)
    cdef double th = r * cv.scale + o
    cdef double dre = 0.0, dim = 0.0, kth, c, s, k
    cdef int q
    for q in range(cv.n_modes):
        k = <double>cv.ks[q]
        kth = k * th
        c = cos(kth)
        s = sin(kth)
        # i k c_q e^{i k th}
        dre += -k * (cv.cre[q] * s + cv.cim[q] * c)
        dim += k * (cv.cre[q] * c - cv.cim[q] * s)
    cdef double nrm = sqrt(dre * dre + dim * dim)
    theta[0] = th
    off[0] = o
    tre[0] = dre / nrm
    tim[0] = dim / nrm


cdef inline void _chord(const Curve* cv, double th_i, double p_i, double x_i,
                        double th_j, double p_j, double x_j,
                        double* cre, double* cim) nogil:
    cdef double d = (x_i - x_j) * cv.scale + (p_i - p_j)
    d = d - TWO_PI * nearbyint(d / TWO_PI)
    cdef double m = th_j + 0.5 * d
    cdef double ar = 0.0, ai = 0.0, sn, er, ei, k
    cdef int q
    for q in range(cv.n_modes):
        k = <double>cv.ks[q]
        sn = 2.0 * sin(0.5 * k * d)
        er = cos(k * m)
        ei = sin(k * m)
        # c_q * (2i sin) * e^{ikm} = c_q * sn * (i er - ei)
        ar += sn * (cv.cre[q] * (-ei) - cv.cim[q] * er)
        ai += sn * (cv.cre[q] * er + cv.cim[q] * (-ei))
    cre[0] = ar
    cim[0] = ai


cdef void _drift_row(const Curve* cv, const double* x, double* out, int n, double coef,
                     double* th, double* off, double* tre, double* tim) nogil:
    cdef int i, j
    cdef double cr, ci, den
    for i in range(n):
        _frame(cv, x[i], &th[i], &off[i], &tre[i], &tim[i])
        out[i] = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            _chord(cv, th[i], off[i], x[i], th[j], off[j], x[j], &cr, &ci)
            den = cr * cr + ci * ci
            # Re(tau_i / c) and Re(tau_j / (-c))
            out[i] += (tre[i] * cr + tim[i] * ci) / den
            out[j] -= (tre[j] * cr + tim[j] * ci) / den
    for i in range(n):
        out[i] *= coef


cdef double _energy_row(const Curve* cv, const double* x, int n,
                        double* th, double* off, double* tre, double* tim) nogil:
    cdef int i, j
    cdef double cr, ci, a, acc = 0.0
    for i in range(n):
        _frame(cv, x[i], &th[i], &off[i], &tre[i], &tim[i])
    for i in range(n):
        for j in range(i + 1, n):
            _chord(cv, th[i], off[i], x[i], th[j], off[j], x[j], &cr, &ci)
            a = sqrt(cr * cr + ci * ci)
            if a < TINY_CHORD:
                return INFINITY
            acc -= log(a)
    return acc


def drift_batch(X, double coef, kc):
    Xa = np.array(X, dtype=np.float64, order="C", ndmin=2)  # writable copy
    cdef double[:, ::1] xv = Xa
    cdef Py_ssize_t M = xv.shape[0], m
    cdef int n = xv.shape[1]
    out = np.zeros((M, n))
    if n < 2:
        return out
    cdef double[:, ::1] ov = out
    cdef _CurveHandle h = _CurveHandle(kc)
    cdef double* work = <double*>malloc(4 * n * sizeof(double))
    with nogil:
        for m in range(M):
            _drift_row(&h.c, &xv[m, 0], &ov[m, 0], n, coef, work, work + n,
                       work + 2 * n, work + 3 * n)
    free(work)
    return out


def energy_batch(X, kc):
    Xa = np.array(X, dtype=np.float64, order="C", ndmin=2)  # writable copy
    cdef double[:, ::1] xv = Xa
    cdef Py_ssize_t M = xv.shape[0], m
    cdef int n = xv.shape[1]
    out = np.zeros(M)
    if n < 2:
        return out
    cdef double[::1] ov = out
    cdef _CurveHandle h = _CurveHandle(kc)
    cdef double* work = <double*>malloc(4 * n * sizeof(double))
    with nogil:
        for m in range(M):
            ov[m] = _energy_row(&h.c, &xv[m, 0], n, work, work + n, work + 2 * n, work + 3 * n)
    free(work)
    return out


# ------------------------------------------------------------------ SDE

cdef inline double _min_gap(const double* x, int n, double length) nogil:
    cdef double g = x[0] + length - x[n - 1]
    cdef int i
    if n == 1:
        return length
    for i in range(n - 1):
        if x[i + 1] - x[i] < g:
            g = x[i + 1] - x[i]
    return g


cdef inline void _quotient(double* x, int n, double length) nogil:
    cdef double r = fmod(x[0], length)
    if r != 0.0 and r < 0.0:
        r += length
    cdef double shift = x[0] - r
    cdef int i
    for i in range(n):
        x[i] = x[i] - shift
    if x[0] < 0.0:
        for i in range(n):
            x[i] += length
    if x[0] >= length:
        for i in range(n):
            x[i] -= length


cdef struct Stepper:
    const Curve* cv
    int n
    double coef
    double noise
    int policy
    int max_halvings
    uint64_t seed
    uint64_t traj
    uint64_t step
    double* b
    double* th
    double* off
    double* tre
    double* tim
    double* levels


cdef int _advance(Stepper* st, const double* x, double* out, double dt, int depth,
                  uint64_t node, double* gap) nogil:
    """Cover an interval dt from x into out, halving on order violations."""
    cdef int i, n = st.n
    cdef double nb = 0.0, scale = 1.0
    cdef double sq = sqrt(dt)
    _drift_row(st.cv, x, st.b, n, st.coef, st.th, st.off, st.tre, st.tim)
    if st.policy == 1:
        for i in range(n):
            nb += st.b[i] * st.b[i]
        scale = 1.0 + dt * sqrt(nb)
    for i in range(n):
        out[i] = x[i] + (st.b[i] / scale) * dt + st.noise * sq * _normal(
            st.seed, st.traj, st.step, node, <uint64_t>i)
    cdef double g = _min_gap(out, n, st.cv.length)
    if g > 0.0:
        return 1
    if depth >= st.max_halvings:
        gap[0] = g
        return 0
    cdef double* mid = st.levels + depth * n
    if not _advance(st, x, mid, 0.5 * dt, depth + 1, 2 * node, gap):
        return 0
    return _advance(st, mid, out, 0.5 * dt, depth + 1, 2 * node + 1, gap)


def em_run(X0, double coef, double noise, double dt, record_steps, seed,
           stream_offset, int policy, int max_halvings, kc):
    cdef double length = kc.length
    Xa = np.array(X0, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] xv = Xa
    cdef Py_ssize_t M = xv.shape[0], m
    cdef int n = xv.shape[1], i
    cdef int64_t[::1] rs = np.array(record_steps, dtype=np.int64)
    cdef Py_ssize_t n_rec = rs.shape[0], rec
    records = np.empty((n_rec, M, n))
    cdef double[:, :, ::1] rv = records
    fail_step = np.full(M, -1, dtype=np.int64)
    fail_gap = np.full(M, np.nan)
    cdef int64_t[::1] fs = fail_step
    cdef double[::1] fg = fail_gap
    cdef int64_t n_steps = rs[n_rec - 1], k
    cdef _CurveHandle h = _CurveHandle(kc)
    cdef Stepper st
    cdef uint64_t seed_ = (<uint64_t>int(seed)) ^ (<uint64_t>SDE_SALT)
    cdef uint64_t off = <uint64_t>int(stream_offset)
    cdef double gap
    cdef double* work = <double*>malloc((7 + max_halvings + 1) * n * sizeof(double))
    cdef double* x
    cdef double* y
    st.cv = &h.c
    st.n = n
    st.coef = coef
    st.noise = noise
    st.policy = policy
    st.max_halvings = max_halvings
    st.seed = seed_
    st.b = work
    st.th = work + n
    st.off = work + 2 * n
    st.tre = work + 3 * n
    st.tim = work + 4 * n
    y = work + 5 * n
    st.levels = work + 7 * n
    with nogil:
        for m in range(M):
            x = &xv[m, 0]
            _quotient(x, n, length)
            st.traj = off + <uint64_t>m
            rec = 0
            if rs[0] == 0:
                for i in range(n):
                    rv[0, m, i] = x[i]
                rec = 1
            for k in range(1, n_steps + 1):
                if fs[m] < 0:
                    st.step = <uint64_t>k
                    if _advance(&st, x, y, dt, 0, 1, &gap):
                        for i in range(n):
                            x[i] = y[i]
                        _quotient(x, n, length)
                    else:
                        fs[m] = k
                        fg[m] = gap
                if rec < n_rec and rs[rec] == k:
                    for i in range(n):
                        rv[rec, m, i] = x[i]
                    rec += 1
    free(work)
    return records, fail_step, fail_gap


# ------------------------------------------------------------------ Metropolis

cdef double _row_log_sum(const Curve* cv, double xk, const double* x, int n, int k) nogil:
    cdef double thk, pk, tr, ti, thj, pj, cr, ci, a, acc = 0.0
    cdef int j
    _frame(cv, xk, &thk, &pk, &tr, &ti)
    for j in range(n):
        if j == k:
            continue
        _frame(cv, x[j], &thj, &pj, &tr, &ti)
        _chord(cv, thk, pk, xk, thj, pj, x[j], &cr, &ci)
        a = sqrt(cr * cr + ci * ci)
        if a < TINY_CHORD:
            return -INFINITY
        acc += log(a)
    return acc


def mcmc_run(X0, double beta, scales, int64_t n_sweeps, int64_t thin, seed,
             stream_offset, sweep_offset, kc):
    cdef double length = kc.length
    Xa = np.array(X0, dtype=np.float64, copy=True, order="C")
    cdef double[:, ::1] xv = Xa
    cdef Py_ssize_t C = xv.shape[0], c
    cdef int n = xv.shape[1], k, i
    cdef double[::1] sc = np.array(scales, dtype=np.float64)
    cdef int64_t n_rec = n_sweeps // thin, rec, sweep
    records = np.empty((n_rec, C, n))
    cdef double[:, :, ::1] rv = records
    accepted = np.zeros(C, dtype=np.int64)
    cdef int64_t[::1] acc = accepted
    cdef _CurveHandle h = _CurveHandle(kc)
    cdef uint64_t seed_ = (<uint64_t>int(seed)) ^ (<uint64_t>MCMC_SALT)
    cdef uint64_t off = <uint64_t>int(stream_offset)
    cdef uint64_t soff = <uint64_t>int(sweep_offset)
    cdef uint64_t chain, key
    cdef double xi, u, xo, xn, lower, upper, delta
    cdef double* x
    with nogil:
        for c in range(C):
            x = &xv[c, 0]
            _quotient(x, n, length)
            chain = off + <uint64_t>c
            rec = 0
            for sweep in range(n_sweeps):
                key = soff + <uint64_t>sweep
                for k in range(n):
                    xi = _normal(seed_, chain, key, <uint64_t>k, 0)
                    u = _uniform(seed_, chain, key, <uint64_t>k, 1, 2)
                    xo = x[k]
                    xn = xo + sc[c] * xi
                    if n > 1:
                        lower = x[k - 1] if k > 0 else x[n - 1] - length
                        upper = x[k + 1] if k < n - 1 else x[0] + length
                        if not (xn > lower and xn < upper):
                            continue
                        delta = beta * (_row_log_sum(&h.c, xn, x, n, k)
                                        - _row_log_sum(&h.c, xo, x, n, k))
                        if not (log(u) < delta):
                            continue
                    x[k] = xn
                    acc[c] += 1
                    if k == 0:
                        _quotient(x, n, length)
                if (sweep + 1) % thin == 0 and rec < n_rec:
                    for i in range(n):
                        rv[rec, c, i] = x[i]
                    rec += 1
    return records, Xa, accepted
