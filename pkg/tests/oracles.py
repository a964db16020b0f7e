"""Independent reference implementations and frozen values used by the tests.

These are written with plain loops and fractions so they share no code path
with the package.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np


def metropolis_loops(n, edges):
    deg = [0] * n
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    P = [[0.0] * n for _ in range(n)]
    for i, j in edges:
        w = 1.0 / (1 + max(deg[i], deg[j]))
        P[i][j] = w
        P[j][i] = w
    for i in range(n):
        P[i][i] = 1.0 - sum(P[i][j] for j in range(n) if j != i)
    return np.array(P)


def moments_fraction(values, probs, n):
    """Exact (mu1, mu2, mu3, s2) with rational arithmetic over all joint outcomes."""
    values = [int(v) for v in values]
    probs = [Fraction(p).limit_denominator(10**9) for p in probs]
    mu1 = mu3 = s2 = Fraction(0)
    for combo in itertools.product(range(len(values)), repeat=n):
        w = Fraction(1)
        for k in combo:
            w *= probs[k]
        b = sum(values[k] for k in combo)
        bi = values[combo[0]]  # worker 0; all workers are exchangeable
        mu1 += w * Fraction(bi, b)
        mu3 += w * Fraction(bi, b * b)
        s2 += w * (Fraction(bi, b) - Fraction(1, n)) ** 2
    mu2 = sum(p * Fraction(1, v) for v, p in zip(values, probs))
    return mu1, mu2, mu3, s2


def eigen_lambda2(P):
    ev = np.linalg.eigvalsh(P - np.full(P.shape, 1.0 / P.shape[0]))
    return float(np.abs(ev).max())


def softmax_xent_numeric(loss_fn, w, h=1e-5):
    """Central-difference gradient of a scalar function of ``w``."""
    g = np.zeros_like(w)
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = h
        g[k] = (loss_fn(w + e) - loss_fn(w - e)) / (2 * h)
    return g


def theorem1_rhs(w0, wstar, t, K, sigma2):
    return float(np.sum((w0 - wstar) ** 2)) / (2 * t * K) + t * sigma2 / 2


# frozen values
TWO_POINT_MU2 = 0.8 / 60 + 0.2  # 0.21333...
TWO_POINT_MEAN = 0.8 * 60 + 0.2  # 48.2
TWO_POINT_RATIO = 4 * TWO_POINT_MEAN * TWO_POINT_MU2  # 41.1306...
PATH3_LAMBDA2 = 2.0 / 3.0
CRLB_10_10 = 0.0125
VAR_10_10 = 0.05
VAR_EQUAL_1_100 = 0.2525
VAR_PROP_1_100 = 1.0 / 101
RATIO_1_100 = 1 / 100 + 100 + 2


def two_point_n4_moments():
    """mu3 and s2 for TwoPoint(1, 60, 0.8) at n = 4 as floats."""
    mu1, mu2, mu3, s2 = moments_fraction([1, 60], [0.2, 0.8], 4)
    return float(mu1), float(mu2), float(mu3), float(s2)


def geometric_inverse_mean(p, terms=200_000):
    k = np.arange(1, terms + 1)
    return float(np.sum((1 - p) ** (k - 1) * p / k))

