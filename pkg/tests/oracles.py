"""Independent reference computations used only by the tests."""

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_separable(E, R):
    """True when conv(E) and conv(R) are disjoint (scipy LP feasibility)."""
    E, R = np.atleast_2d(E), np.atleast_2d(R)
    if len(E) == 0 or len(R) == 0:
        return True
    k, m, d = len(E), len(R), E.shape[1]
    # lambda >= 0, mu >= 0, sum lambda = sum mu = 1, E^T lambda = R^T mu
    A_eq = np.zeros((d + 2, k + m))
    A_eq[:d, :k] = E.T
    A_eq[:d, k:] = -R.T
    A_eq[d, :k] = 1
    A_eq[d + 1, k:] = 1
    b_eq = np.zeros(d + 2)
    b_eq[d] = b_eq[d + 1] = 1
    res = linprog(np.zeros(k + m), A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res.status == 2  # infeasible


def brute_removable(f, D, cap):
    """Points of D lying in some hyperplane-cut subset of oscillation <= cap."""
    D = list(D)
    X = f.domain.points
    V = f.distances
    out = set()
    for k in range(1, len(D) + 1):
        for E in itertools.combinations(D, k):
            if set(E) <= out:
                continue
            if k > 1 and V[np.ix_(E, E)].max() > cap:
                continue
            R = [i for i in D if i not in E]
            if lp_separable(X[list(E)], X[R] if R else np.zeros((0, X.shape[1]))):
                out |= set(E)
    return out


def exact_cover_number(X, r):
    """Least number of radius-r balls centred at sample points covering X."""
    n = len(X)
    dist = np.linalg.norm(X[:, None] - X[None], axis=2)
    cover = dist <= r
    for k in range(1, n + 1):
        for C in itertools.combinations(range(n), k):
            if cover[list(C)].any(axis=0).all():
                return k
    return n


def max_packing(X, r):
    """Largest subset with pairwise distances > 2r (exhaustive)."""
    n = len(X)
    dist = np.linalg.norm(X[:, None] - X[None], axis=2)
    for k in range(n, 0, -1):
        for C in itertools.combinations(range(n), k):
            sub = dist[np.ix_(C, C)]
            if k == 1 or sub[~np.eye(k, dtype=bool)].min() > 2 * r:
                return k
    return 0
