# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``trendflow.kernels`` for the contract.

Each state is integrated independently with scratch buffers sized
``n`` and ``n * (degree + 1)``; term order and arithmetic order match the
NumPy fallback.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    HORIZON = 0
    CONVERGED = 1
    ESCAPED = 2
    OVERFLOW = 3


cdef struct Poly:
    Py_ssize_t K
    Py_ssize_t n
    Py_ssize_t d
    const double *coef
    const Py_ssize_t *comp
    const Py_ssize_t *exps
    double *pw      # n * (d + 1) scratch
    double *tmp     # n scratch (stage state)
    double *k1
    double *k2
    double *k3
    double *k4


cdef int poly_init(Poly *p, const double[::1] coef, const Py_ssize_t[::1] comp,
                   const Py_ssize_t[:, ::1] exps, Py_ssize_t degree) except -1:
    p.K = coef.shape[0]
    p.n = exps.shape[1]
    p.d = degree
    p.coef = &coef[0]
    p.comp = &comp[0]
    p.exps = &exps[0, 0]
    p.pw = <double *> malloc(p.n * (p.d + 1) * sizeof(double))
    p.tmp = <double *> malloc(5 * p.n * sizeof(double))
    if p.pw == NULL or p.tmp == NULL:
        free(p.pw)
        free(p.tmp)
        raise MemoryError()
    p.k1 = p.tmp + p.n
    p.k2 = p.tmp + 2 * p.n
    p.k3 = p.tmp + 3 * p.n
    p.k4 = p.tmp + 4 * p.n
    return 0


cdef void poly_free(Poly *p) noexcept nogil:
    free(p.pw)
    free(p.tmp)


cdef void field(Poly *p, const double *x, double *out) noexcept nogil:
    cdef Py_ssize_t j, q, k, e, stride = p.d + 1
    cdef double t
    cdef bint started
    for j in range(p.n):
        out[j] = 0.0
        p.pw[j * stride + 1] = x[j]
        for q in range(2, p.d + 1):
            p.pw[j * stride + q] = p.pw[j * stride + q - 1] * x[j]
    for k in range(p.K):
        t = p.coef[k]
        for j in range(p.n):
            e = p.exps[k * p.n + j]
            if e:
                t = t * p.pw[j * stride + e]
        out[p.comp[k]] += t


cdef bint rk4(Poly *p, double *x, double h) noexcept nogil:
    """One classical RK4 step in place; returns False (x untouched) on non-finite result."""
    cdef Py_ssize_t j, n = p.n
    cdef double hh = 0.5 * h, h6 = h / 6.0, v
    field(p, x, p.k1)
    for j in range(n):
        p.tmp[j] = x[j] + hh * p.k1[j]
    field(p, p.tmp, p.k2)
    for j in range(n):
        p.tmp[j] = x[j] + hh * p.k2[j]
    field(p, p.tmp, p.k3)
    for j in range(n):
        p.tmp[j] = x[j] + h * p.k3[j]
    field(p, p.tmp, p.k4)
    for j in range(n):
        v = x[j] + h6 * (p.k1[j] + 2.0 * p.k2[j] + 2.0 * p.k3[j] + p.k4[j])
        if not isfinite(v):
            return False
        p.tmp[j] = v
    for j in range(n):
        x[j] = p.tmp[j]
    return True


def eval_field(const double[::1] coef, const Py_ssize_t[::1] comp, const Py_ssize_t[:, ::1] exps,
               Py_ssize_t degree, const double[:, ::1] x):
    cdef Poly p
    cdef Py_ssize_t s, S = x.shape[0]
    out = np.zeros((S, exps.shape[1]))
    cdef double[:, ::1] o = out
    poly_init(&p, coef, comp, exps, degree)
    with nogil:
        for s in range(S):
            field(&p, &x[s, 0], &o[s, 0])
    poly_free(&p)
    return out


def rk4_steps(const double[::1] coef, const Py_ssize_t[::1] comp, const Py_ssize_t[:, ::1] exps,
              Py_ssize_t degree, const double[:, ::1] x, double h, Py_ssize_t nsteps, double last_h):
    cdef Poly p
    cdef Py_ssize_t s, k, S = x.shape[0]
    out = np.array(x, dtype=np.float64, copy=True)
    fail = np.full(S, -1, dtype=np.intp)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t[::1] f = fail
    poly_init(&p, coef, comp, exps, degree)
    with nogil:
        for s in range(S):
            for k in range(nsteps):
                if not rk4(&p, &o[s, 0], h):
                    f[s] = k
                    break
            if f[s] < 0 and last_h > 0:
                if not rk4(&p, &o[s, 0], last_h):
                    f[s] = nsteps
    poly_free(&p)
    return out, fail


cdef Py_ssize_t nearest(const double *x, const double[:, ::1] fps, Py_ssize_t n, double radius) noexcept nogil:
    cdef Py_ssize_t m, j, best = -1
    cdef double d, bestd = radius, diff
    for m in range(fps.shape[0]):
        d = 0.0
        for j in range(n):
            diff = x[j] - fps[m, j]
            d += diff * diff
        d = sqrt(d)
        if d < bestd:
            bestd = d
            best = m
    return best


cdef Py_ssize_t escape_code(const double *x, const double *lo, const double *hi, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t j
    for j in range(n):
        if x[j] < lo[j]:
            return 2 * j
        if x[j] > hi[j]:
            return 2 * j + 1
    return -1


cdef double norm_field(Poly *p, const double *x, double *buf) noexcept nogil:
    cdef Py_ssize_t j
    cdef double acc = 0.0
    field(p, x, buf)
    for j in range(p.n):
        acc += buf[j] * buf[j]
    return sqrt(acc)


def integrate(const double[::1] coef, const Py_ssize_t[::1] comp, const Py_ssize_t[:, ::1] exps,
              Py_ssize_t degree, const double[:, ::1] starts, double h, Py_ssize_t max_steps,
              const double[::1] lower, const double[::1] upper, const double[:, ::1] fps,
              double conv_radius, double field_tol, Py_ssize_t conv_count, bint record):
    cdef Poly p
    cdef Py_ssize_t s, step, code, near, cnt, j
    cdef Py_ssize_t S = starts.shape[0], n = exps.shape[1]
    cdef bint have_fps = fps.shape[0] > 0

    x_out = np.array(starts, dtype=np.float64, copy=True)
    status = np.full(S, HORIZON, dtype=np.intp)
    target = np.full(S, -1, dtype=np.intp)
    steps = np.zeros(S, dtype=np.intp)
    cdef double[:, ::1] xo = x_out
    cdef Py_ssize_t[::1] st = status
    cdef Py_ssize_t[::1] tg = target
    cdef Py_ssize_t[::1] ns = steps
    cdef double[:, ::1] rec
    path = None
    if record:
        path = np.empty((max_steps + 1, n))
        rec = path
        for j in range(n):
            rec[0, j] = starts[0, j]

    poly_init(&p, coef, comp, exps, degree)
    cdef double *buf = <double *> malloc(n * sizeof(double))
    if buf == NULL:
        poly_free(&p)
        raise MemoryError()
    with nogil:
        for s in range(S):
            code = escape_code(&xo[s, 0], &lower[0], &upper[0], n)
            if code >= 0:
                st[s] = ESCAPED
                tg[s] = code
                continue
            if have_fps:
                near = nearest(&xo[s, 0], fps, n, conv_radius)
                if near >= 0 and norm_field(&p, &xo[s, 0], buf) < field_tol:
                    st[s] = CONVERGED
                    tg[s] = near
                    continue
            cnt = 0
            for step in range(1, max_steps + 1):
                if not rk4(&p, &xo[s, 0], h):
                    st[s] = OVERFLOW
                    ns[s] = step - 1
                    break
                ns[s] = step
                if record:
                    for j in range(n):
                        rec[step, j] = xo[s, j]
                code = escape_code(&xo[s, 0], &lower[0], &upper[0], n)
                if code >= 0:
                    st[s] = ESCAPED
                    tg[s] = code
                    break
                if have_fps:
                    near = nearest(&xo[s, 0], fps, n, conv_radius)
                    if near >= 0 and norm_field(&p, &xo[s, 0], buf) < field_tol:
                        cnt += 1
                        if cnt >= conv_count:
                            st[s] = CONVERGED
                            tg[s] = near
                            break
                    else:
                        cnt = 0
    free(buf)
    poly_free(&p)
    if record:
        path = path[: steps[0] + 1].copy()
    return status, target, steps, x_out, path
