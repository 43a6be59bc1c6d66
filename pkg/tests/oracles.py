"""Independent reference implementations used as test oracles.

Plain Python loops over lists, sharing no code with the package.
"""

import math


def matmul(a, b):
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0.0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for k in range(inner):
                acc += a[i][k] * b[k][j]
            out[i][j] = acc
    return out


def similarity(acts, gamma, smooth=False):
    m, c = len(acts), len(acts[0])
    s = [[0.0] * c for _ in range(c)]
    for n in range(c):
        for k in range(c):
            total = 0.0
            for row in acts:
                d = row[n] - row[k]
                total += math.exp(-gamma * (d * d if smooth else abs(d)))
            s[n][k] = total / m
    return s


def det(a):
    """Determinant by Gaussian elimination with partial pivoting."""
    a = [list(map(float, r)) for r in a]
    n = len(a)
    sign, prod = 1.0, 1.0
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[pivot][col] == 0.0:
            return 0.0
        if pivot != col:
            a[col], a[pivot] = a[pivot], a[col]
            sign = -sign
        prod *= a[col][col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for k in range(col, n):
                a[r][k] -= f * a[col][k]
    return sign * prod


def forward(layers, x, activations):
    """Straight-line MLP evaluation; ``layers`` is a list of (weight, bias) lists."""
    h = [list(r) for r in x]
    for (w, b), act in zip(layers, activations):
        z = matmul(h, w)
        h = [[act(v + b[j]) for j, v in enumerate(row)] for row in z]
    return h


def softmax_xent(logits, labels):
    total = 0.0
    for row, y in zip(logits, labels):
        top = max(row)
        z = sum(math.exp(v - top) for v in row)
        total += math.log(z) - (row[y] - top)
    return total / len(labels)
