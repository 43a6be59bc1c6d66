"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Loops run over one matrix dimension only; the other is vectorized. Results
agree with the compiled kernels to rounding, except ``matmul`` which is
bit-identical (same accumulation order).
"""

import numpy as np


def matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.float64)
    for k in range(a.shape[1]):
        out += a[:, k, None] * b[k]
    return out


def rbf_similarity(acts, gamma, smooth):
    m, c = acts.shape
    s = np.eye(c)
    for n in range(c - 1):
        d = acts[:, n, None] - acts[:, n + 1:]
        e = np.exp(-gamma * d * d) if smooth else np.exp(-gamma * np.abs(d))
        s[n, n + 1:] = e.sum(axis=0) / m
        s[n + 1:, n] = s[n, n + 1:]
    return s


def rbf_similarity_grad(acts, gsym, gamma, smooth):
    m, c = acts.shape
    scale = gamma / m
    g = np.zeros((m, c), dtype=np.float64)
    for n in range(c - 1):
        d = acts[:, n, None] - acts[:, n + 1:]
        if smooth:
            t = -2.0 * scale * d * np.exp(-gamma * d * d)
        else:
            t = -scale * np.sign(d) * np.exp(-gamma * np.abs(d))
        t *= gsym[n, n + 1:]
        g[:, n] += t.sum(axis=1)
        g[:, n + 1:] -= t
    return g


def cholesky(a, jitter):
    c = a.shape[0]
    L = np.zeros((c, c), dtype=np.float64)
    for k in range(c):
        pivot = a[k, k] + jitter - (L[k, :k] * L[k, :k]).sum()
        if not pivot > 0.0:
            return L, k
        L[k, k] = np.sqrt(pivot)
        below = a[k + 1:, k] - (L[k + 1:, :k] * L[k, :k]).sum(axis=1)
        L[k + 1:, k] = below / L[k, k]
    return L, -1


def cholesky_inverse(L):
    c = L.shape[0]
    y = np.zeros((c, c), dtype=np.float64)
    for i in range(c):
        row = -(L[i, :i, None] * y[:i, :i + 1]).sum(axis=0)
        row[i] += 1.0
        y[i, :i + 1] = row / L[i, i]
    x = np.zeros((c, c), dtype=np.float64)
    for i in range(c - 1, -1, -1):
        x[i] = (y[i] - (L[i + 1:, i, None] * x[i + 1:]).sum(axis=0)) / L[i, i]
    return x
