"""Strongly slicing functionals on finite clouds.

A functional ``u`` strongly slices ``A`` for ``f`` when the oscillation of
``f`` on ``S(A, u, t)`` tends to zero with ``t``. On a finite cloud the limit
is the oscillation over the face where ``u`` attains its maximum, so the
profile verdict is decided by that face.

:func:`ss_perturb` searches for a nearby functional with a small slice that
avoids the obstacle ``conv(A + (y + V_r)) & {u <= a}``; ``V_r`` is the disc of
radius ``r`` in ``ker u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dentability import resolve_subset
from .exceptions import DomainError, InconclusiveError
from .geometry import Tolerances, oscillation, slice_indices

__all__ = [
    "SlicingProfile",
    "PerturbResult",
    "BourReport",
    "DensityStats",
    "ss_profile",
    "ss_perturb",
    "bour_bound_check",
    "ss_density_scan",
    "kernel_basis",
    "disc_samples",
]


def _unit(u, d, what="functional"):
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != d:
        raise DomainError(f"{what} has {u.shape[0]} coefficients, expected {d}")
    n = float(np.linalg.norm(u))
    if not n > 0 or not math.isfinite(n):
        raise DomainError(f"{what} must be nonzero and finite")
    return u, n


@dataclass(frozen=True)
class SlicingProfile:
    """Oscillation samples ``(t, osc)`` along the depth schedule.

    ``verdict`` is ``"strongly_slicing"`` (with ``rate``, the log-log slope of
    the positive samples, or ``None``), ``"refuted"`` (with ``floor``, the
    oscillation on the argmax face) or ``"inconclusive"``.
    """

    functional: tuple
    samples: tuple
    verdict: str
    floor: float = 0.0
    rate: float | None = None

    def rows(self):
        return list(self.samples)


def ss_profile(f, A=None, u=None, tol=None):
    tol = tol or Tolerances()
    D = resolve_subset(f, A)
    if len(D) == 0:
        raise DomainError("profile of an empty set")
    pts = f.domain.points
    u, _ = _unit(u, pts.shape[1])
    samples = []
    for t in tol.t_schedule:
        members = slice_indices(pts, D, u, t, tol)
        samples.append((float(t), oscillation(f, members)))
    proj = pts[D] @ u
    face = D[proj.max() - proj <= tol.sep_tol]
    floor = oscillation(f, face)
    oscs = np.array([o for _, o in samples])
    if floor > tol.osc_tol:
        verdict, rate = "refuted", None
    elif oscs[-1] <= tol.osc_tol and np.all(np.diff(oscs) <= tol.osc_tol):
        verdict = "strongly_slicing"
        pos = oscs > tol.osc_tol
        ts = np.array([t for t, _ in samples])
        rate = None
        if pos.sum() >= 2:
            rate = float(np.polyfit(np.log(ts[pos]), np.log(oscs[pos]), 1)[0])
    else:
        verdict, rate = "inconclusive", None
    return SlicingProfile(tuple(float(c) for c in u), tuple(samples), verdict, floor, rate)


# --------------------------------------------------------------------------
# kernel discs


def kernel_basis(u):
    """Orthonormal basis (rows) of ``ker u``."""
    u = np.asarray(u, dtype=float).ravel()
    _, _, vt = np.linalg.svd(u[None, :])
    return vt[1:]


def disc_samples(u, r, n_random=64, rng=None):
    """Points of the radius-``r`` disc in ``ker u``.

    Lattice points ``+-r w_i`` and ``+-r (w_i +- w_j)/sqrt 2`` on the rim plus
    ``n_random`` seeded uniform points of the disc.
    """
    W = kernel_basis(u)
    k = W.shape[0]
    if k == 0:
        return np.zeros((1, len(np.ravel(u))))
    rows = []
    for i in range(k):
        rows += [W[i], -W[i]]
        for j in range(i + 1, k):
            for s1 in (1, -1):
                for s2 in (1, -1):
                    rows.append((s1 * W[i] + s2 * W[j]) / math.sqrt(2))
    pts = [r * np.array(rows)]
    if n_random:
        rng = rng if rng is not None else np.random.default_rng(0)
        g = rng.standard_normal((n_random, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rad = r * rng.random(n_random) ** (1.0 / k)
        pts.append((g * rad[:, None]) @ W)
    return np.vstack(pts)


def _rim_mesh(u, S, r, probes=4096):
    """Largest distance from a rim point of the disc to the samples ``S``."""
    W = kernel_basis(u)
    k = W.shape[0]
    if k == 0:
        return 0.0
    if k == 1:
        rim = r * np.vstack((W[0], -W[0]))
    else:
        rng = np.random.default_rng(12345)
        g = rng.standard_normal((probes, k))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        rim = r * (g @ W)
    d2 = ((rim[:, None, :] - S[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.min(axis=1)).max())


# --------------------------------------------------------------------------
# the (2/r) perturbation bound


@dataclass(frozen=True)
class BourReport:
    checked: int
    excluded: int
    violations: list
    bound: float
    slack: float

    @property
    def passed(self):
        return not self.violations


def bour_bound_check(u, x0, y, r, candidates, n_random=64, rng=None, float_tol=1e-12):
    """Check ``|u - y*| <= (2/r)|x0 - y| + slack`` for admissible candidates.

    A candidate is admissible when ``y*(x0)`` exceeds its supremum over the
    sampled disc ``y + V_r``; others are counted as excluded.
    """
    u = np.asarray(u, dtype=float).ravel()
    x0 = np.asarray(x0, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if abs(np.linalg.norm(u) - 1) > 1e-9:
        raise DomainError("u must have norm one")
    if not u @ x0 > u @ y:
        raise DomainError("need u(x0) > u(y)")
    if not r > 0 or np.linalg.norm(x0 - y) > r / 2 * (1 + 1e-12):
        raise DomainError("need |x0 - y| <= r/2")
    S = disc_samples(u, r, n_random, rng)
    slack = 4 * _rim_mesh(u, S, r) / r
    bound = 2 / r * float(np.linalg.norm(x0 - y))
    C = np.atleast_2d(np.asarray(candidates, dtype=float))
    if C.size and np.any(np.abs(np.linalg.norm(C, axis=1) - 1) > 1e-9):
        raise DomainError("candidates must have norm one")
    top = (y + S) @ C.T
    ok = C @ x0 > top.max(axis=0)
    bad = []
    for k in np.flatnonzero(ok):
        dist = float(np.linalg.norm(u - C[k]))
        if dist > bound + slack + float_tol:
            bad.append((int(k), dist))
    return BourReport(int(ok.sum()), int((~ok).sum()), bad, bound, slack)


# --------------------------------------------------------------------------
# perturbation search


@dataclass(frozen=True)
class PerturbResult:
    """Functional ``y*`` with ``|u - y*| = distance`` and its small slice."""

    functional: np.ndarray
    distance: float
    depth: float
    members: tuple
    oscillation: float
    obstacle_sup: float | None = None


def _obstacle_sup(P, u, a, ys):
    """``max ys`` over ``conv(P) & {u <= a}``.

    The maximum of a linear functional is attained at a vertex: a point of
    ``P`` below the cut or the crossing of a segment between points on both
    sides of it.
    """
    h, v = P @ u, P @ ys
    low = h <= a
    if not low.any():
        raise DomainError("obstacle is empty")
    best = float(v[low].max())
    if (~low).any():
        hl, hh = h[low], h[~low]
        vl, vh = v[low], v[~low]
        s = (a - hl)[:, None] / (hh[None, :] - hl[:, None])
        best = max(best, float((vl[:, None] + s * (vh[None, :] - vl[:, None])).max()))
    return best


def _candidates(u, eps, count, rng):
    """Unit functionals within ``eps`` of ``u``, sorted by distance."""
    d = u.shape[0]
    W = kernel_basis(u)
    theta_max = 2 * math.asin(min(eps / 2, 1.0))
    if d == 1:
        return np.zeros((0, 1))
    if d == 2:
        m = max(1, count // 2)
        th = theta_max * np.arange(1, m + 1) / (m + 1)
        th = np.repeat(th, 2) * np.tile([1.0, -1.0], m)
        return np.cos(th)[:, None] * u + np.sin(th)[:, None] * W[0]
    g = rng.standard_normal((count, W.shape[0]))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    th = theta_max * rng.random(count) * (1 - 1e-9)
    order = np.argsort(th)
    th, g = th[order], g[order]
    return np.cos(th)[:, None] * u + np.sin(th)[:, None] * (g @ W)


def _best_depth(f, pts, D, y, limit, n_target, tol):
    for t in tol.t_schedule:
        if t > limit:
            continue
        members = slice_indices(pts, D, y, t, tol)
        o = oscillation(f, members)
        if o < n_target:
            return t, members, o
    return None


def ss_perturb(f, A=None, u=None, eps=0.5, n_target=None, tol=None, rng=None,
               n_random=64):
    """Find ``y*`` within ``eps`` of ``u`` with a slice of oscillation ``< n_target``.

    ``u`` itself is accepted when one of its scheduled slices already works.
    Otherwise candidates are tried in order of distance to ``u``; a candidate
    counts only when its slice lies strictly above the obstacle, and the
    returned distance is re-checked against ``eps``.
    """
    tol = tol or Tolerances()
    D = resolve_subset(f, A)
    if len(D) == 0:
        raise DomainError("perturbation over an empty set")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    n_target = eps if n_target is None else float(n_target)
    if not n_target > 0:
        raise DomainError("n_target must be positive")
    pts = f.domain.points
    u, nu = _unit(u, pts.shape[1])
    if abs(nu - 1) > 1e-9:
        raise DomainError("u must be normalised")
    rng = rng if rng is not None else np.random.default_rng(0)

    hit = _best_depth(f, pts, D, u, math.inf, n_target, tol)
    if hit is not None:
        t, members, o = hit
        return PerturbResult(u, 0.0, t, tuple(int(i) for i in members), o)

    A_pts = pts[D]
    proj = A_pts @ u
    x0 = A_pts[int(np.argmax(proj))]
    y = A_pts.mean(axis=0)
    if not u @ y < u @ x0:
        spread = max(float(np.ptp(A_pts, axis=0).max()), 1.0)
        y = y - spread / 2 * u
    a = (u @ x0 + u @ y) / 2
    R = float(np.linalg.norm(A_pts - y, axis=1).max())
    r = 2 * R / eps
    P = np.vstack((A_pts, y + disc_samples(u, r, n_random, rng)))

    best = None
    Y = _candidates(u, eps, tol.budget, rng)
    for k in range(Y.shape[0]):
        ys = Y[k] / np.linalg.norm(Y[k])
        dist = float(np.linalg.norm(u - ys))
        if dist >= eps:
            continue
        obst = _obstacle_sup(P, u, a, ys)
        limit = float(np.max(A_pts @ ys)) - obst - tol.sep_tol
        if limit <= 0:
            continue
        hit = _best_depth(f, pts, D, ys, limit, n_target, tol)
        if hit is None:
            if best is None:
                members = slice_indices(pts, D, ys, min(limit, tol.t_schedule[0]), tol)
                best = PerturbResult(ys, dist, limit, tuple(int(i) for i in members),
                                     oscillation(f, members), obst)
            continue
        t, members, o = hit
        return PerturbResult(ys, dist, t, tuple(int(i) for i in members), o, obst)
    raise InconclusiveError("no admissible perturbation within the budget", best=best)


@dataclass(frozen=True)
class DensityStats:
    """Per-direction outcomes of a perturbation scan.

    ``rows`` holds ``(index, success, distance, oscillation, depth)``.
    """

    rows: tuple
    eps: float
    n_target: float

    @property
    def success_fraction(self):
        return sum(1 for r in self.rows if r[1]) / len(self.rows)

    @property
    def max_perturbation(self):
        ok = [r[2] for r in self.rows if r[1]]
        return max(ok) if ok else math.nan


def ss_density_scan(f, A=None, n_dirs=64, eps=0.25, n_target=None, tol=None, seed=0):
    """Run :func:`ss_perturb` from ``n_dirs`` seeded random unit directions."""
    tol = tol or Tolerances()
    if int(n_dirs) < 1:
        raise DomainError("n_dirs must be at least 1")
    n_target = eps if n_target is None else n_target
    rng = np.random.default_rng(seed)
    d = f.domain.dim
    U = rng.standard_normal((int(n_dirs), d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    rows = []
    for k, u in enumerate(U):
        try:
            res = ss_perturb(f, A, u, eps, n_target, tol, np.random.default_rng([seed, k]))
        except InconclusiveError:
            rows.append((k, False, math.nan, math.nan, math.nan))
            continue
        rows.append((k, True, res.distance, res.oscillation, res.depth))
    return DensityStats(tuple(rows), float(eps), float(n_target))
