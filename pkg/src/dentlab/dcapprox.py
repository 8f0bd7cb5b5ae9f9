"""Delta-convex approximation and the dentability renorming function.

The envelope ``f_n(x) = min_y f(y) + n|x - y|^2`` splits as ``g - h`` with
``g = 2n|x|^2`` and ``h(x) = max_y n|x + y|^2 - 2n|y|^2 - f(y)``, both convex.
Minima and maxima run over the sample points of the domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .dentability import dz_index, modulus_delta
from .exceptions import DomainError, NotFinitelyDentableError
from .geometry import PointCloud, ScoredMap, Tolerances, lp_norm, min_norm_point, pairwise_lp

__all__ = [
    "DcApproximant",
    "DcSplitReport",
    "ControlCertificate",
    "RenormFunction",
    "DropReport",
    "moreau_envelope",
    "dc_split_check",
    "uniform_error_curve",
    "lipschitz_constant",
    "control_check",
    "dist_to_set_control",
    "build_renorm",
    "midpoint_drop_check",
]

_CHUNK = 2048


def _real_values(f):
    try:
        return f.scalar()
    except DomainError:
        raise DomainError("the envelope needs a real-valued map") from None


def _envelope_tables(Y, fy, X, n):
    """``f_n``, the minimiser index and ``h`` at the rows of ``X``."""
    env = np.empty(len(X))
    arg = np.empty(len(X), dtype=int)
    h = np.empty(len(X))
    ny = np.einsum("ij,ij->i", Y, Y)
    for s in range(0, len(X), _CHUNK):
        Xc = X[s:s + _CHUNK]
        sq = cdist(Xc, Y, "sqeuclidean")
        vals = fy[None, :] + n * sq
        arg[s:s + _CHUNK] = np.argmin(vals, axis=1)
        env[s:s + _CHUNK] = vals[np.arange(len(Xc)), arg[s:s + _CHUNK]]
        plus = cdist(Xc, -Y, "sqeuclidean")
        h[s:s + _CHUNK] = (n * plus - 2 * n * ny[None, :] - fy[None, :]).max(axis=1)
    return env, arg, h


@dataclass(frozen=True, eq=False)
class DcApproximant:
    """Envelope values and their convex split on an evaluation grid.

    ``f_grid`` holds the original map on the grid when it is known there
    (grid points that are domain samples, or a map with ``func``).
    """

    n: float
    grid: PointCloud
    values: np.ndarray
    g: np.ndarray
    h: np.ndarray
    argmin: np.ndarray
    source: ScoredMap
    f_grid: np.ndarray | None = None

    def h_at(self, X):
        """``h`` evaluated afresh at arbitrary points."""
        Y = self.source.domain.points
        fy = self.source.scalar()
        return _envelope_tables(Y, fy, np.atleast_2d(X), self.n)[2]

    def g_at(self, X):
        X = np.atleast_2d(X)
        return 2 * self.n * np.einsum("ij,ij->i", X, X)

    def with_h(self, h):
        """Copy with a replaced ``h`` table (used for fault injection)."""
        return replace(self, h=np.asarray(h, dtype=float))


def _grid_values(f, grid):
    if f.func is not None:
        return np.asarray(f.func(grid.points), dtype=float).reshape(-1)
    d = pairwise_lp(grid.points, f.domain.points)
    j = d.argmin(axis=1)
    if np.all(d[np.arange(len(j)), j] == 0):
        return f.scalar()[j]
    return None


def moreau_envelope(f, n, grid=None):
    """Sampled envelope ``f_n`` with its ``g - h`` split on ``grid``."""
    if len(f.domain) == 0:
        raise DomainError("envelope of a map on an empty domain")
    if not n > 0:
        raise DomainError("n must be positive")
    fy = _real_values(f)
    grid = grid or f.domain
    if grid.dim != f.domain.dim:
        raise DomainError("grid and domain dimensions differ")
    X, Y = grid.points, f.domain.points
    env, arg, h = _envelope_tables(Y, fy, X, n)
    g = 2 * n * np.einsum("ij,ij->i", X, X)
    return DcApproximant(n, grid, env, g, h, arg, f, _grid_values(f, grid))


@dataclass(frozen=True)
class DcSplitReport:
    identity_violations: list
    midpoint_violations: list
    lipschitz_g: float
    lipschitz_h: float
    max_identity_error: float
    pairs: int

    @property
    def passed(self):
        return not self.identity_violations and not self.midpoint_violations


def dc_split_check(approx, trials=1000, rng=None, tol=None):
    """Check ``f_n = g - h``, midpoint convexity of ``g`` and ``h``, and
    estimate their Lipschitz constants on random grid pairs.

    Endpoint values come from the stored tables; the midpoint value is taken
    from the table when the midpoint is itself a grid point and recomputed
    from the formula otherwise.
    """
    tol = tol or Tolerances()
    rng = rng if rng is not None else np.random.default_rng(0)
    X = approx.grid.points
    err = np.abs(approx.values - (approx.g - approx.h))
    ident = [(int(i), float(err[i])) for i in np.flatnonzero(err > tol.osc_tol)]
    m = len(X)
    i = rng.integers(0, m, trials)
    j = rng.integers(0, m, trials)
    keep = i != j
    i, j = i[keep], j[keep]
    M = (X[i] + X[j]) / 2
    g_mid = approx.g_at(M)
    h_mid = approx.h_at(M)
    # snap midpoints that are grid points to the stored tables
    dist = cdist(M, X)
    k = dist.argmin(axis=1)
    on = dist[np.arange(len(k)), k] <= 1e-12 * max(1.0, float(np.abs(X).max()))
    g_mid[on] = approx.g[k[on]]
    h_mid[on] = approx.h[k[on]]
    mids = []
    for name, tab, mid in (("g", approx.g, g_mid), ("h", approx.h, h_mid)):
        gap = (tab[i] + tab[j]) / 2 - mid
        for q in np.flatnonzero(gap < -tol.osc_tol):
            mids.append((name, int(i[q]), int(j[q]), float(gap[q])))
    dx = np.linalg.norm(X[i] - X[j], axis=1)
    ok = dx > 0
    lg = float((np.abs(approx.g[i] - approx.g[j])[ok] / dx[ok]).max()) if ok.any() else 0.0
    lh = float((np.abs(approx.h[i] - approx.h[j])[ok] / dx[ok]).max()) if ok.any() else 0.0
    return DcSplitReport(ident, mids, lg, lh, float(err.max()), int(len(i)))


def lipschitz_constant(f, max_pairs=4_000_000, rng=None):
    """Largest slope ``|f(x) - f(y)| / |x - y|`` over sample pairs."""
    X = f.domain.points
    n = len(X)
    if n < 2:
        return 0.0
    if n * n <= max_pairs:
        P = pairwise_lp(X)
        V = f.distances
        ok = P > 0
        return float((V[ok] / P[ok]).max()) if ok.any() else 0.0
    rng = rng if rng is not None else np.random.default_rng(0)
    i = rng.integers(0, n, max_pairs // 4)
    j = rng.integers(0, n, max_pairs // 4)
    P = np.linalg.norm(X[i] - X[j], axis=1)
    V = f.distances[i, j]
    ok = P > 0
    return float((V[ok] / P[ok]).max())


def uniform_error_curve(f, n_list, grid=None):
    """Rows ``(n, sup |f - f_n|, L^2 / (4n))`` with ``L`` the sampled slope."""
    n_list = list(n_list)
    if not n_list:
        raise DomainError("n_list must be nonempty")
    L = lipschitz_constant(f)
    rows = []
    for n in n_list:
        ap = moreau_envelope(f, n, grid)
        fg = ap.f_grid
        if fg is None:
            raise DomainError("f is unknown on the grid; pass a map with func")
        rows.append((n, float(np.max(np.abs(fg - ap.values))), L * L / (4 * n)))
    return rows


# --------------------------------------------------------------------------
# control functions


@dataclass(frozen=True)
class ControlCertificate:
    """Per-trial slacks ``RHS - LHS`` of the control inequality.

    ``snap`` holds the error bound charged to each trial when the
    combination point had to be replaced by its nearest sample.
    """

    slacks: np.ndarray
    snap: np.ndarray
    combos: list
    tolerance: float

    @property
    def passed(self):
        return bool(np.all(self.slacks >= -(self.tolerance + self.snap)))

    @property
    def worst(self):
        return float((self.slacks + self.snap).min()) if len(self.slacks) else 0.0


def control_check(F, f, trials=200, rng=None, tol=None, max_points=3):
    """Sample ``sum l_i F(x_i) - F(sum l_i x_i)`` against the control ``f``.

    Both maps are evaluated exactly at the combination when they carry
    ``func``; otherwise the combination snaps to the nearest sample and the
    sampled Lipschitz constants turn the snap distance into an error bound.
    """
    tol = tol or Tolerances()
    if F.domain is not f.domain and not np.array_equal(F.domain.points, f.domain.points):
        raise DomainError("F and f must share a domain")
    if F.metric.kind != "lp":
        raise DomainError("F needs vector values")
    rng = rng if rng is not None else np.random.default_rng(0)
    X = F.domain.points
    fv = _real_values(f)
    exact = F.func is not None and f.func is not None
    if not exact:
        LF, Lf = lipschitz_constant(F), lipschitz_constant(f)
    slacks, snaps, combos = [], [], []
    for _ in range(trials):
        k = int(rng.integers(2, max_points + 1))
        idx = rng.choice(len(X), size=min(k, len(X)), replace=False)
        lam = rng.dirichlet(np.ones(len(idx)))
        z = lam @ X[idx]
        if exact:
            Fz = np.asarray(F.func(z[None, :]), dtype=float).reshape(-1)
            fz = float(np.asarray(f.func(z[None, :])).reshape(-1)[0])
            snap = 0.0
        else:
            d = np.linalg.norm(X - z, axis=1)
            j = int(d.argmin())
            Fz, fz = F.values[j], fv[j]
            snap = (LF + Lf) * float(d[j])
        lhs = float(lp_norm(lam @ F.values[idx] - Fz, F.metric.p))
        rhs = float(lam @ fv[idx]) - fz
        slacks.append(rhs - lhs)
        snaps.append(snap)
        combos.append((idx.tolist(), lam.tolist()))
    return ControlCertificate(np.array(slacks), np.array(snaps), combos, tol.osc_tol)


def dist_to_set_control(C, S, scale=1.0, p=2):
    """Convex control for ``x -> scale * (d(x,S), -d(x,S))`` in the l1 norm.

    ``d(x, S) = P - Q`` with ``P = sum_s |x - s|`` and
    ``Q = max_s sum_{s' != s} |x - s'|`` both convex, so ``2 * scale * (P + Q)``
    controls the map ``(a, 1 - a)`` with ``a = scale * d(x, S)``.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))

    def func(Y):
        Dm = pairwise_lp(np.atleast_2d(Y), S, p=p)
        P = Dm.sum(axis=1)
        Q = (P[:, None] - Dm).max(axis=1)
        return 2 * scale * (P + Q)

    return ScoredMap(C, func(C.points), func=func)


# --------------------------------------------------------------------------
# renorming function


def _dist_to_hull(X, S):
    """Euclidean distance from each row of ``X`` to ``conv(S)``."""
    if S.shape[1] == 1:
        lo, hi = S.min(), S.max()
        x = X[:, 0]
        return np.maximum(np.maximum(lo - x, x - hi), 0.0)
    out = np.empty(len(X))
    for i, x in enumerate(X):
        y, _, _ = min_norm_point(S - x)
        out[i] = math.sqrt(float(y @ y))
    return out


@dataclass(frozen=True, eq=False)
class RenormFunction:
    """Truncated sum ``F(x)^2 = G(x) + G(-x)`` over derivation stage sets.

    ``G(x) = sum_k sum_n (2^-k / N_k) d(x, conv [C]^n)^2`` over the nonempty
    stages ``[C]^0, ..., [C]^(N_k - 1)`` at ``eps = 2^-k``. Writing the
    reflected part as ``G(-x)`` makes ``F`` exactly even.
    """

    K: int
    mode: str
    N: tuple
    sets: list = field(repr=False)
    weights: tuple = field(repr=False)
    scale: float = 1.0

    def _G(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        tot = np.zeros(len(X))
        for w, S in zip(self.weights, self.sets):
            tot += w * _dist_to_hull(X, S) ** 2
        return tot

    def F2(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.scale ** 2 * (self._G(X) + self._G(-X))

    def __call__(self, X):
        return np.sqrt(self.F2(X))

    def scaled(self, c):
        return replace(self, scale=self.scale * c)


def build_renorm(f, K, mode="exact", tol=None, capacity=None):
    """Collect the derivation chains at ``eps = 2^-k`` for ``k = 1..K``."""
    tol = tol or Tolerances()
    K = int(K)
    if K < 0:
        raise DomainError("K must be nonnegative")
    X = f.domain.points
    N, sets, weights = [], [], []
    for k in range(1, K + 1):
        tr = dz_index(f, 2.0 ** -k, mode, tol, capacity)
        if not tr.finite:
            raise NotFinitelyDentableError(k)
        N.append(tr.dz)
        for st in tr.stages:
            sets.append(X[list(st.members)])
            weights.append(2.0 ** -k / tr.dz)
    return RenormFunction(K, mode, tuple(N), sets, tuple(weights))


@dataclass(frozen=True)
class DropReport:
    checked: int
    violations: list
    min_margin: float
    drop: float
    delta: float
    dz: int | None
    vacuous: bool

    @property
    def passed(self):
        return not self.violations


def midpoint_drop_check(R, f, eps, trials=1000, rng=None, tol=None, capacity=None):
    """Sample pairs with ``d(f(x), f(y)) > eps`` and test the midpoint drop.

    Asserts ``F((x+y)/2)^2 <= (F(x)^2 + F(y)^2)/2 - eps d^2 / (128 Dz^3)``
    with ``d = delta(eps/4)`` and ``Dz = Dz(f, eps/8)``.
    """
    tol = tol or Tolerances()
    rng = rng if rng is not None else np.random.default_rng(0)
    delta = modulus_delta(f, [eps / 4]).delta[0]
    V = f.distances
    ii, jj = np.nonzero(np.triu(V > eps, 1))
    if math.isinf(delta) or len(ii) == 0:
        return DropReport(0, [], math.inf, 0.0, delta, None, True)
    tr = dz_index(f, eps / 8, R.mode, tol, capacity)
    if not tr.finite:
        raise NotFinitelyDentableError(round(-math.log2(eps / 8)),
                                       "Dz(f, eps/8) is not finite on the samples")
    drop = eps * delta ** 2 / (128 * tr.dz ** 3)
    pick = rng.integers(0, len(ii), trials)
    X = f.domain.points
    x, y = X[ii[pick]], X[jj[pick]]
    margin = (R.F2(x) + R.F2(y)) / 2 - drop - R.F2((x + y) / 2)
    bad = [(int(ii[pick[q]]), int(jj[pick[q]]), float(margin[q]))
           for q in np.flatnonzero(margin < -tol.osc_tol)]
    return DropReport(int(trials), bad, float(margin.min()), float(drop), float(delta),
                      tr.dz, False)
