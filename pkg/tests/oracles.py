"""Independent reference implementations used only by the tests.

They share no code with the package: exact rational arithmetic for weighted
least squares, arbitrary precision Newton for logistic regression, and
explicit risk-set loops for the Cox partial likelihood.
"""
from fractions import Fraction

import mpmath
import numpy as np


def exact_wls(X, y, w):
    """Solve X'WX theta = X'Wy by Gauss-Jordan elimination over the rationals."""
    X = [[Fraction(float(v)) for v in row] for row in np.asarray(X)]
    y = [Fraction(float(v)) for v in np.asarray(y)]
    w = [Fraction(float(v)) for v in np.asarray(w)]
    n, p = len(X), len(X[0])
    A = [[sum(w[i] * X[i][r] * X[i][c] for i in range(n)) for c in range(p)]
         + [sum(w[i] * X[i][r] * y[i] for i in range(n))] for r in range(p)]
    for col in range(p):
        piv = next(r for r in range(col, p) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        inv = 1 / A[col][col]
        A[col] = [v * inv for v in A[col]]
        for r in range(p):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [a - f * b for a, b in zip(A[r], A[col])]
    return np.array([float(A[r][p]) for r in range(p)])


def mp_logistic(X, y, dps=50, iters=200):
    """Newton-Raphson for the logistic MLE at ``dps`` decimal digits."""
    with mpmath.workdps(dps):
        X = mpmath.matrix([[mpmath.mpf(float(v)) for v in row] for row in np.asarray(X)])
        y = [mpmath.mpf(float(v)) for v in np.asarray(y)]
        n, p = X.rows, X.cols
        b = mpmath.matrix(p, 1)
        for _ in range(iters):
            g = mpmath.matrix(p, 1)
            H = mpmath.matrix(p, p)
            for i in range(n):
                eta = sum(X[i, k] * b[k] for k in range(p))
                mu = 1 / (1 + mpmath.exp(-eta))
                for r in range(p):
                    g[r] += X[i, r] * (y[i] - mu)
                    for c in range(p):
                        H[r, c] += X[i, r] * X[i, c] * mu * (1 - mu)
            step = mpmath.lu_solve(H, g)
            b += step
            if mpmath.norm(step) < mpmath.mpf(10) ** (-dps + 10):
                break
        return np.array([float(b[k]) for k in range(p)])


def cox_loglik_loops(beta, x, time, delta):
    """Breslow partial log-likelihood written as an explicit double loop."""
    total = 0.0
    for i in range(len(x)):
        if delta[i] != 1:
            continue
        risk = sum(np.exp(beta * x[k]) for k in range(len(x)) if time[k] >= time[i])
        total += beta * x[i] - np.log(risk)
    return total
