# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batched log-likelihood for both defective families.

Same contract as ``_kernels_py.loglik_batch``; the inner loop runs without the
GIL and accumulates with Neumaier compensated summation.
"""
import numpy as np
from libc.stdint cimport int64_t
from libc.math cimport exp, log, expm1, log1p, sqrt, fabs, INFINITY, isnan
from scipy.special.cython_special cimport erfcx, log_ndtr


cdef double LOG_FLOOR = log(1e-300)
cdef double LN2 = log(2.0)
cdef double SERIES_THRESHOLD = 1e-8
cdef double SQRT2 = sqrt(2.0)
cdef double ERFCX_MIN_ARG = -30.0


cdef inline double log1mexp(double x) noexcept nogil:
    if x >= 0.0:
        return -INFINITY
    if x > -LN2:
        return log(-expm1(x))
    return log1p(-exp(x))


cdef inline double gompertz_log_surv(double a, double b, double t) noexcept nogil:
    cdef double at
    if t <= 0.0:
        return 0.0
    if t == INFINITY:
        return b / a if a < 0.0 else -INFINITY
    at = a * t
    if fabs(a) < SERIES_THRESHOLD:
        return -b * t * (1.0 + at / 2.0 + at * at / 6.0)
    return -b * expm1(at) / a


cdef inline double log_erfcx_gap(double u, double v) noexcept nogil:
    return -LN2 + log(erfcx(u / SQRT2) - erfcx(v / SQRT2))


cdef inline double ig_log_surv(double a, double b, double t) noexcept nogil:
    cdef double s, z1, z2, log_upper, log_ratio
    if t <= 0.0:
        return 0.0
    if t == INFINITY:
        return log1mexp(2.0 * a / b) if a < 0.0 else -INFINITY
    s = sqrt(b * t)
    z1 = (a * t - 1.0) / s
    if z1 > 0.0:
        return -0.5 * z1 * z1 + log_erfcx_gap(z1, (a * t + 1.0) / s)
    z2 = (-a * t - 1.0) / s
    log_upper = log_ndtr(-z1)
    log_ratio = 2.0 * a / b + log_ndtr(z2) - log_upper
    return log_upper + log1mexp(log_ratio)


cdef inline double log_surv(int family, double a, double b, double t) noexcept nogil:
    if family == 0:
        return gompertz_log_surv(a, b, t)
    return ig_log_surv(a, b, t)


cdef inline bint ig_log_excess(double a, double b, double t, double *out) noexcept nogil:
    # log(S(t) - cure) for a < 0; false when out of the erfcx range.
    cdef double s, u, v
    if a >= 0.0 or t <= 0.0 or t == INFINITY:
        return False
    s = sqrt(b * t)
    u = (-a * t - 1.0) / s
    if u <= ERFCX_MIN_ARG:
        return False
    v = (-a * t + 1.0) / s
    out[0] = -0.5 * v * v + log_erfcx_gap(u, v)
    return True


cdef inline double log_interval(int family, double a, double b, double lo,
                                double hi) noexcept nogil:
    cdef double lu, diff, ad, growth, gl, gr
    if family == 1 and hi != INFINITY:
        if ig_log_excess(a, b, lo, &gl) and ig_log_excess(a, b, hi, &gr):
            diff = gr - gl
            return gl + log1mexp(diff if diff < 0.0 else 0.0)
    lu = log_surv(family, a, b, lo)
    if lu == -INFINITY:
        return -INFINITY
    if family == 0 and hi != INFINITY:
        ad = a * (hi - lo)
        if fabs(a) < SERIES_THRESHOLD:
            growth = (hi - lo) * (1.0 + ad / 2.0 + ad * ad / 6.0)
        else:
            growth = expm1(ad) / a
        diff = -b * exp(a * lo) * growth
    else:
        diff = log_surv(family, a, b, hi) - lu
    return lu + log1mexp(diff if diff < 0.0 else 0.0)


cdef double one_loglik(int family, const double[::1] theta, const double[:, ::1] X,
                       const double[::1] left, const double[::1] right,
                       const int64_t[::1] cause, int k, long *ndeg) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0], q = X.shape[1]
    cdef Py_ssize_t i, j, r, off
    cdef double total = 0.0, comp = 0.0, tmp, term, a, eta, b
    cdef long deg = 0
    cdef int c
    for i in range(n):
        c = <int> cause[i]
        if c == 0:
            term = 0.0
            for j in range(k):
                off = 2 * q * j
                a = 0.0
                eta = 0.0
                for r in range(q):
                    a += X[i, r] * theta[off + r]
                    eta += X[i, r] * theta[off + q + r]
                b = exp(eta)
                term += log_surv(family, a, b, left[i])
        else:
            off = 2 * q * (c - 1)
            a = 0.0
            eta = 0.0
            for r in range(q):
                a += X[i, r] * theta[off + r]
                eta += X[i, r] * theta[off + q + r]
            b = exp(eta)
            term = log_interval(family, a, b, left[i], right[i])
        if isnan(term) or term < LOG_FLOOR:
            term = LOG_FLOOR
            deg += 1
        # Neumaier summation
        tmp = total + term
        if fabs(total) >= fabs(term):
            comp += (total - tmp) + term
        else:
            comp += (term - tmp) + total
        total = tmp
    ndeg[0] = deg
    return total + comp


def loglik_batch(int family_code, thetas, X, left, right, cause, int num_causes):
    cdef const double[:, ::1] th = np.ascontiguousarray(np.atleast_2d(thetas), dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] lv = np.ascontiguousarray(left, dtype=np.float64)
    cdef const double[::1] rv = np.ascontiguousarray(right, dtype=np.float64)
    cdef const int64_t[::1] cv = np.ascontiguousarray(cause, dtype=np.int64)
    cdef Py_ssize_t m = th.shape[0], row
    values = np.empty(m)
    degenerate = np.zeros(m, dtype=np.int64)
    cdef double[::1] vals = values
    cdef int64_t[::1] degs = degenerate
    cdef long nd
    if th.shape[1] != 2 * num_causes * Xv.shape[1]:
        raise ValueError("parameter vector length does not match design and causes")
    with nogil:
        for row in range(m):
            nd = 0
            vals[row] = one_loglik(family_code, th[row], Xv, lv, rv, cv, num_causes, &nd)
            degs[row] = nd
    return values, degenerate
