"""Slow, obviously-correct reference computations used only by the tests.

None of these share code with the package: they loop in pure Python or hand
the problem to a generic solver.
"""

from fractions import Fraction
from itertools import combinations, permutations

import numpy as np
from scipy.optimize import linprog


def ecdf_count(values, u):
    return sum(1 for x in values if x <= u) / len(values)


def quantile_scan(values, v):
    """inf{u in support : F(u) >= v}, scanning candidates in increasing order."""
    n = len(values)
    for x in sorted(values):
        if Fraction(sum(1 for y in values if y <= x), n) >= Fraction(v):
            return x
    return max(values)


def w2_assignment(a, b):
    """Minimum mean squared pairing distance over all bijections (equal sizes)."""
    a = sorted(a)
    best = None
    for perm in permutations(b):
        cost = np.mean((np.asarray(a, dtype=float) - np.asarray(perm, dtype=float)) ** 2)
        best = cost if best is None or cost < best else best
    return best


def w2_linprog(a, b):
    """Discrete optimal transport between uniform empirical measures via an LP."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    cost = ((a[:, None] - b[None, :]) ** 2).ravel()
    A_eq, b_eq = [], []
    for i in range(n):
        row = np.zeros((n, m))
        row[i, :] = 1
        A_eq.append(row.ravel())
        b_eq.append(1 / n)
    for j in range(m):
        col = np.zeros((n, m))
        col[:, j] = 1
        A_eq.append(col.ravel())
        b_eq.append(1 / m)
    res = linprog(cost, A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None), method="highs")
    assert res.success
    return res.fun


def ks_double_loop(values, groups):
    """Max over group pairs and thresholds of |F_s(u) - F_r(u)|."""
    labels = sorted(set(groups))
    per = {g: [v for v, h in zip(values, groups) if h == g] for g in labels}
    best = 0.0
    for g, h in combinations(labels, 2):
        for u in values:
            fa = sum(1 for x in per[g] if x <= u) / len(per[g])
            fb = sum(1 for x in per[h] if x <= u) / len(per[h])
            best = max(best, abs(fa - fb))
    return best


def auc_pairs(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def normal_cdf(x, mean=0.0, sd=1.0):
    from math import erf, sqrt

    return 0.5 * (1 + erf((x - mean) / (sd * sqrt(2))))


def central_difference(f, params, h=1e-5):
    """Finite-difference gradient of f() w.r.t. every entry of the arrays in params."""
    out = {}
    for name, arr in params.items():
        grad = np.zeros(arr.shape)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + h
            up = f()
            arr[idx] = keep - h
            down = f()
            arr[idx] = keep
            grad[idx] = (up - down) / (2 * h)
        out[name] = grad
    return out


def block_relative_error(analytic, numeric):
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return 0.0 if scale < 1e-12 else float(np.linalg.norm(analytic - numeric) / scale)
