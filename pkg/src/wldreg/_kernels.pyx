# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.

Every function here has a numpy twin with the same signature in
``_fallback.py``; the two are checked against each other in the test suite.
Inputs are expected to be C-contiguous float64 arrays (the Python wrappers in
``linalg`` and ``similarity`` guarantee this).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, sqrt

cnp.import_array()

cdef extern from *:
    """
    #if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__linux__)
    #define WLD_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
    #else
    #define WLD_CLONES
    #endif

    /* Accumulate one sample's exp(-gamma|x_n - x_k|), k > n, into the upper
       triangle of s (row stride c). Each is the smaller cross product of the
       factored exps. */
    WLD_CLONES
    static void wld_sim_sample(const double *restrict up, const double *restrict down,
                               double *restrict s, Py_ssize_t c) {
        for (Py_ssize_t n = 0; n < c; n++) {
            const double un = up[n], dn = down[n];
            double *restrict row = s + n * c;
            #pragma omp simd
            for (Py_ssize_t k = n + 1; k < c; k++) {
                double p = dn * up[k], q = un * down[k];
                row[k] += p < q ? p : q;
            }
        }
    }

    /* One sample's contribution to the activation gradient. With d = x_n - x_k
       (and the 1/m scale folded into up), p = exp(-gamma*d), q = exp(gamma*d);
       the smaller is the kernel value and which one it is gives -sign(d).
       Each unit sums over the full row of the symmetric gs, so the inner loop
       is a pure reduction with no stores. */
    WLD_CLONES
    static void wld_grad_sample(const double *restrict up, const double *restrict down,
                                const double *restrict gs, double *restrict g, Py_ssize_t c) {
        for (Py_ssize_t n = 0; n < c; n++) {
            const double un = up[n], dn = down[n];
            const double *restrict grow = gs + n * c;
            double acc = 0.0;
            #pragma omp simd reduction(+:acc)
            for (Py_ssize_t k = 0; k < c; k++) {
                double p = dn * up[k], q = un * down[k];
                acc += (p < q ? -p : (q < p ? q : 0.0)) * grow[k];
            }
            g[n] = acc;
        }
    }
    """
    void wld_sim_sample(const double *up, const double *down, double *s, Py_ssize_t c) nogil
    void wld_grad_sample(const double *up, const double *down, const double *gs,
                         double *g, Py_ssize_t c) nogil


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], p = a.shape[1], q = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double aik
    out = np.zeros((n, q), dtype=np.float64)
    cdef double[:, ::1] o = out
    # i-k-j order; each o[i, j] accumulates over k in increasing order.
    for i in range(n):
        for k in range(p):
            aik = a[i, k]
            for j in range(q):
                o[i, j] += aik * b[k, j]
    return out


# Per-sample exponent half-range above which the factored exp would leave
# the safe double range; such samples use one exp per pair instead.
FACTOR_LIMIT = 600.0


def _factor_table(acts, double gamma, double scale):
    """Per-sample factors ``up = scale*exp(gamma*(x - c))``, ``down = exp(-gamma*(x - c))``.

    ``c`` is the midrange of each sample, so every exponent is bounded by
    gamma * range / 2. Returns the two tables and a mask of usable samples.
    """
    lo = acts.min(axis=1, keepdims=True)
    hi = acts.max(axis=1, keepdims=True)
    ok = (gamma * (hi - lo) * 0.5 <= FACTOR_LIMIT).ravel()
    t = gamma * (acts - 0.5 * (hi + lo))
    t[~ok] = 0.0
    up = np.exp(t)
    if scale != 1.0:
        up *= scale
    return up, np.exp(-t), ok.astype(np.uint8)


def rbf_similarity(const double[:, ::1] acts, double gamma, bint smooth):
    cdef Py_ssize_t m = acts.shape[0], c = acts.shape[1]
    cdef Py_ssize_t j, n, k
    cdef double d, x
    out = np.zeros((c, c), dtype=np.float64)
    cdef double[:, ::1] s = out
    cdef double[:, ::1] up, down
    cdef const unsigned char[::1] ok
    if smooth:
        ok = np.zeros(m, dtype=np.uint8)
    else:
        up, down, ok = _factor_table(np.asarray(acts), gamma, 1.0)
    for j in range(m):
        if ok[j]:
            wld_sim_sample(&up[j, 0], &down[j, 0], &s[0, 0], c)
            continue
        for n in range(c):
            x = acts[j, n]
            for k in range(n + 1, c):
                d = x - acts[j, k]
                if smooth:
                    s[n, k] += exp(-gamma * d * d)
                else:
                    s[n, k] += exp(-gamma * fabs(d))
    for n in range(c):
        s[n, n] = 1.0
        for k in range(n + 1, c):
            s[n, k] /= m
            s[k, n] = s[n, k]
    return out


def rbf_similarity_grad(const double[:, ::1] acts, const double[:, ::1] gsym,
                        double gamma, bint smooth):
    cdef Py_ssize_t m = acts.shape[0], c = acts.shape[1]
    cdef Py_ssize_t j, n, k
    cdef double d, t, x, scale = gamma / m
    out = np.zeros((m, c), dtype=np.float64)
    cdef double[:, ::1] g = out
    cdef double[:, ::1] up, down
    cdef const unsigned char[::1] ok
    if smooth:
        ok = np.zeros(m, dtype=np.uint8)
    else:
        up, down, ok = _factor_table(np.asarray(acts), gamma, scale)
    for j in range(m):
        if ok[j]:
            wld_grad_sample(&up[j, 0], &down[j, 0], &gsym[0, 0], &g[j, 0], c)
            continue
        for n in range(c):
            x = acts[j, n]
            for k in range(n + 1, c):
                d = x - acts[j, k]
                if smooth:
                    t = -2.0 * scale * d * exp(-gamma * d * d)
                elif d > 0:
                    t = -scale * exp(-gamma * d)
                elif d < 0:
                    t = scale * exp(gamma * d)
                else:
                    continue
                t *= gsym[n, k]
                g[j, n] += t
                g[j, k] -= t
    return out


def cholesky(const double[:, ::1] a, double jitter):
    """Return ``(L, failed)``; ``failed`` is the pivot index that went <= 0, or -1."""
    cdef Py_ssize_t c = a.shape[0]
    cdef Py_ssize_t i, k, p
    cdef double acc
    out = np.zeros((c, c), dtype=np.float64)
    cdef double[:, ::1] L = out
    for i in range(c):
        for k in range(i + 1):
            acc = a[i, k]
            if i == k:
                acc += jitter
            for p in range(k):
                acc -= L[i, p] * L[k, p]
            if i == k:
                if not acc > 0.0:
                    return out, i
                L[i, i] = sqrt(acc)
            else:
                L[i, k] = acc / L[k, k]
    return out, -1


def cholesky_inverse(const double[:, ::1] L):
    """Inverse of ``L @ L.T`` by a forward then a backward triangular solve."""
    cdef Py_ssize_t c = L.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, lik
    y_arr = np.zeros((c, c), dtype=np.float64)
    x_arr = np.zeros((c, c), dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] x = x_arr
    # L Y = I; Y is lower triangular.
    for i in range(c):
        for j in range(i + 1):
            acc = 1.0 if i == j else 0.0
            for k in range(j, i):
                acc -= L[i, k] * y[k, j]
            y[i, j] = acc / L[i, i]
    # L^T X = Y, rows from the bottom up.
    for i in range(c - 1, -1, -1):
        for j in range(c):
            x[i, j] = y[i, j]
        for k in range(i + 1, c):
            lik = L[k, i]
            for j in range(c):
                x[i, j] -= lik * x[k, j]
        lik = L[i, i]
        for j in range(c):
            x[i, j] /= lik
    return x_arr
