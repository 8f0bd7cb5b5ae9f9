"""Denting tests, the epsilon-derivation and the dentability index.

Two derivation modes are provided. ``exact`` removes a point when some
hyperplane-cut subset of the current set contains it and has oscillation at
most ``eps``; ``cluster`` removes a point when it can be separated from the
values farther than ``eps / 2`` from its own. The cluster mode scales to large
clouds, and the two modes sandwich each other at scales ``eps`` and ``eps/2``.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .exceptions import CapacityError, DomainError, InconclusiveError
from .geometry import (
    Metric,
    PointCloud,
    ScoredMap,
    Slice,
    Tolerances,
    hull_membership,
    oscillation,
    pairwise_lp,
    slice_indices,
)

__all__ = [
    "DentingResult",
    "DerivationStage",
    "DerivationTrace",
    "ModulusTable",
    "LancienReport",
    "denting_test",
    "find_small_slice",
    "derive_once",
    "dz_index",
    "lancien_check",
    "modulus_delta",
    "equi_slice",
    "product_map",
    "DEFAULT_CAPACITY",
    "exact_removals",
    "resolve_subset",
]

# (max points for any dimension, max points in dimension <= 2)
DEFAULT_CAPACITY = (14, 200)

_ANGLE_GROUP = 1e-12


def _threads():
    try:
        return max(1, int(os.environ.get("DENTLAB_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(func, items):
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(func, items))


def resolve_subset(f, A):
    """Indices of ``A`` (labels or integer indices) in the domain of ``f``."""
    n = len(f.domain)
    if A is None:
        return np.arange(n)
    items = list(A)
    if not items:
        return np.zeros(0, dtype=int)
    if all(isinstance(a, (int, np.integer)) for a in items):
        idx = np.asarray(items, dtype=int)
        if idx.min() < 0 or idx.max() >= n:
            raise DomainError("subset index out of range")
    else:
        idx = np.asarray([f.domain.index_of(a) for a in items], dtype=int)
    return np.unique(idx)


def _resolve_point(f, x):
    if isinstance(x, (int, np.integer)):
        if not 0 <= int(x) < len(f.domain):
            raise DomainError("point index out of range")
        return int(x)
    return f.domain.index_of(x)


def _check_eps(eps):
    if not (isinstance(eps, (int, float, np.floating)) and eps > 0 and math.isfinite(eps)):
        raise DomainError("eps must be a positive finite number")
    return float(eps)


def _separating_slice(points, D, x, rest, tol):
    """Slice of ``points[D]`` containing ``x`` and missing ``points[rest]``.

    Returns ``None`` when ``x`` is not strictly separable from ``conv(rest)``.
    """
    if len(rest) == 0:
        proj = points[D][:, 0]
        u = np.zeros(points.shape[1])
        u[0] = 1.0
        width = float(proj.max() - proj.min())
        t = width + 1.0
        return Slice(u, t, tuple(int(i) for i in np.sort(D)))
    res = hull_membership(points[x], points[rest], tol)
    if res.inside:
        return None
    u = res.separator
    sup = float(np.max(points[D] @ u))
    top_rest = float(np.max(points[rest] @ u))
    t = sup - top_rest - res.margin / 2 + tol.sep_tol
    members = slice_indices(points, D, u, t, tol)
    return Slice(u, t, tuple(int(i) for i in members))


# --------------------------------------------------------------------------
# denting test


@dataclass(frozen=True)
class DentingResult:
    """``denting`` plus the witness slice when the test succeeds."""

    denting: bool
    slice: Slice | None = None

    def __bool__(self):
        return self.denting


def denting_test(f, x, eps, tol=None, subset=None):
    """Separate ``x`` from the points whose values lie farther than ``eps/2``.

    Succeeds exactly when ``x`` is outside the convex hull of the far set; the
    returned slice then only contains points within ``eps/2`` of ``f(x)``, so
    its oscillation is at most ``eps``.
    """
    tol = tol or Tolerances()
    eps = _check_eps(eps)
    D = resolve_subset(f, subset)
    i = _resolve_point(f, x)
    if i not in set(D.tolist()):
        raise DomainError("point is not in the tested subset")
    row = f.distances[i, D]
    far = D[row > tol.threshold(eps) / 2]
    sl = _separating_slice(f.domain.points, D, i, far, tol)
    return DentingResult(sl is not None, sl)


# --------------------------------------------------------------------------
# exact removal sets


def _prefix_osc(M):
    """Oscillation of every prefix of an ordered set with distance table M."""
    if M.shape[0] == 0:
        return np.zeros(0)
    col = np.triu(M, 1).max(axis=0)
    return np.maximum.accumulate(col)


def _cut_ok(proj_sorted, tol):
    """Prefix sizes ``k`` that some slice can cut off (no tie at the cut)."""
    n = proj_sorted.shape[0]
    ok = np.ones(n, dtype=bool)
    ok[:-1] = proj_sorted[:-1] - proj_sorted[1:] > 2 * tol.sep_tol
    return ok


def _prefix_slice(points, D, u, k, tol):
    proj = points[D] @ u
    order = np.argsort(-proj, kind="stable")
    gaps = proj.max() - proj[order]
    if k >= len(D):
        t = float(gaps[-1]) + 1.0
    else:
        t = float(gaps[k - 1] + gaps[k]) / 2 + tol.sep_tol
    members = slice_indices(points, D, u, t, tol)
    return Slice(np.asarray(u, float), t, tuple(int(i) for i in members))


def _sweep_directions(P):
    """Arc midpoints between critical angles of a planar point set."""
    n = P.shape[0]
    if n < 2:
        return np.array([0.0])
    i, j = np.triu_indices(n, 1)
    dv = P[j] - P[i]
    nz = np.abs(dv).max(axis=1) > 0
    if not nz.any():
        return np.array([0.0])
    base = np.arctan2(dv[nz, 1], dv[nz, 0])
    crit = np.concatenate((base + np.pi / 2, base - np.pi / 2)) % (2 * np.pi)
    crit = np.sort(crit)
    keep = np.concatenate(([True], np.diff(crit) > _ANGLE_GROUP))
    crit = crit[keep]
    nxt = np.concatenate((crit[1:], [crit[0] + 2 * np.pi]))
    return (crit + nxt) / 2


def _exact_planar(f, D, cap, tol):
    """Removal mask and witnesses for ``d <= 2`` via a rotational sweep."""
    X = f.domain.points[D]
    n = len(D)
    dist = f.distances[np.ix_(D, D)]
    if X.shape[1] == 1:
        dirs = [np.array([1.0]), np.array([-1.0])]
    else:
        dirs = [np.array([math.cos(a), math.sin(a)]) for a in _sweep_directions(X)]
    removed = np.zeros(n, dtype=bool)
    first = {}
    prev_order = None
    osc = None
    for di, u in enumerate(dirs):
        proj = X @ u
        order = np.argsort(-proj, kind="stable")
        if prev_order is None:
            osc = _prefix_osc(dist[np.ix_(order, order)])
        else:
            pos = np.empty(n, dtype=int)
            pos[order] = np.arange(n)
            same = np.maximum.accumulate(pos[prev_order]) <= np.arange(n)
            changed = np.flatnonzero(~same)
            if changed.size:
                osc = osc.copy()
                for k in changed:
                    # prefix of size k+1 differs from the previous order
                    prior = osc[k - 1] if k > 0 else 0.0
                    tail = dist[order[k], order[:k]].max() if k > 0 else 0.0
                    osc[k] = max(prior, tail)
                # later prefixes inherit a possibly larger running max
                osc = np.maximum.accumulate(osc)
        prev_order = order
        ok = _cut_ok(proj[order], tol) & (osc <= cap)
        if not ok.any():
            continue
        K = int(np.flatnonzero(ok)[-1]) + 1
        fresh = order[:K][~removed[order[:K]]]
        if fresh.size:
            removed[fresh] = True
            for p in fresh:
                first[int(p)] = (di, K)
        if removed.all():
            break
    witnesses = {}
    for p, (di, K) in first.items():
        sl = _prefix_slice(f.domain.points, D, dirs[di], K, tol)
        if int(D[p]) not in sl.members or oscillation(f, sl.members) > cap:
            sl = _fallback_witness(f, D, p, dirs[di], K, tol)
        witnesses[int(D[p])] = sl
    return removed, witnesses


def _fallback_witness(f, D, p, u, K, tol):
    """Separate a cut-off prefix from the rest via the difference polytope."""
    proj = f.domain.points[D] @ u
    order = np.argsort(-proj, kind="stable")
    S, R = D[order[:K]], D[order[K:]]
    sl = _separating_slice(f.domain.points, D, int(D[p]), R, tol)
    if sl is None:
        raise DomainError("prefix witness could not be realised within sep_tol")
    return sl


def _exact_cliques(f, D, cap, tol):
    """Removal mask and witnesses in any dimension via maximal cliques.

    ``x`` is removable exactly when some maximal set ``K`` of pairwise close
    values containing ``x`` has ``x`` outside ``conv(D \\ K)``.
    """
    pts = f.domain.points
    dist = f.distances[np.ix_(D, D)]
    n = len(D)
    close = dist <= cap
    G = nx.Graph()
    G.add_nodes_from(range(n))
    ii, jj = np.nonzero(np.triu(close, 1))
    G.add_edges_from(zip(ii.tolist(), jj.tolist()))

    def one(a):
        nbhd = [a] + list(G.neighbors(a))
        for K in nx.find_cliques(G.subgraph(nbhd)):
            Kset = set(K)
            rest = D[[b for b in range(n) if b not in Kset]]
            sl = _separating_slice(pts, D, int(D[a]), rest, tol)
            if sl is not None:
                return sl
        return None

    results = _pmap(one, range(n))
    removed = np.array([r is not None for r in results], dtype=bool)
    witnesses = {int(D[a]): r for a, r in enumerate(results) if r is not None}
    return removed, witnesses


def _check_capacity(n, d, capacity):
    any_d, low_d = capacity or DEFAULT_CAPACITY
    if d <= 2:
        if n > max(any_d, low_d):
            raise CapacityError(
                f"exact derivation limited to {max(any_d, low_d)} points in dimension {d}")
    elif n > any_d:
        raise CapacityError(f"exact derivation limited to {any_d} points in dimension {d}")


def exact_removals(f, D, cap, tol=None, capacity=None, method="auto"):
    """Exact removal mask over ``D`` at oscillation cap ``cap``.

    ``method`` is ``"sweep"`` (``d <= 2``), ``"cliques"`` (``n <= 14``) or
    ``"auto"``. Returns ``(mask, witnesses)``.
    """
    tol = tol or Tolerances()
    D = np.asarray(D, dtype=int)
    d = f.domain.dim
    _check_capacity(len(D), d, capacity)
    if len(D) == 0:
        return np.zeros(0, dtype=bool), {}
    if method == "auto":
        method = "sweep" if d <= 2 else "cliques"
    if method == "sweep":
        if d > 2:
            raise DomainError("the sweep needs dimension 1 or 2")
        return _exact_planar(f, D, cap, tol)
    if method == "cliques":
        return _exact_cliques(f, D, cap, tol)
    raise DomainError(f"unknown exact method {method!r}")


# --------------------------------------------------------------------------
# derivation


@dataclass(frozen=True, eq=False)
class DerivationStage:
    """One derivation step from ``members`` to ``survivors``.

    ``witnesses`` maps every removed index to the slice that removed it.
    """

    members: tuple
    survivors: tuple
    witnesses: dict

    @property
    def removed(self):
        keep = set(self.survivors)
        return tuple(i for i in self.members if i not in keep)

    def max_witness_osc(self, f):
        if not self.witnesses:
            return 0.0
        return max(oscillation(f, s.members) for s in self.witnesses.values())

    def as_dict(self, f):
        labels = f.domain.labels
        return {
            "members": [labels[i] for i in self.members],
            "survivors": [labels[i] for i in self.survivors],
            "witnesses": {
                labels[i]: dict(self.witnesses[i].as_dict(f.domain),
                                oscillation=oscillation(f, self.witnesses[i].members))
                for i in sorted(self.witnesses)
            },
        }


def derive_once(f, D=None, eps=None, mode="exact", tol=None, capacity=None):
    """Remove every point of ``D`` lying in a slice of oscillation ``<= eps``.

    In ``cluster`` mode a point is removed when :func:`denting_test`
    succeeds for it inside ``D``.
    """
    tol = tol or Tolerances()
    eps = _check_eps(eps)
    D = resolve_subset(f, D)
    if mode == "exact":
        mask, wit = exact_removals(f, D, tol.threshold(eps), tol, capacity)
    elif mode == "cluster":
        res = _pmap(lambda i: denting_test(f, int(i), eps, tol, D), D)
        mask = np.array([r.denting for r in res], dtype=bool)
        wit = {int(i): r.slice for i, r in zip(D, res) if r.denting}
    else:
        raise DomainError(f"unknown derivation mode {mode!r}")
    members = tuple(int(i) for i in D)
    survivors = tuple(int(i) for i in D[~mask]) if len(D) else ()
    return DerivationStage(members, survivors, wit)


@dataclass(frozen=True, eq=False)
class DerivationTrace:
    """Iterated derivation ``C, [C]', [C]'', ...``.

    Exactly one of ``dz`` and ``stalled_at`` is set. ``stalled_at = i``
    means stage ``i`` removed nothing, so ``[C]^i`` is a fixed point.
    """

    epsilon: float
    mode: str
    stages: list
    dz: int | None = None
    stalled_at: int | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)

    @property
    def finite(self):
        return self.dz is not None

    def stage_sets(self):
        """``[C]^0, [C]^1, ...`` including the final empty or fixed set."""
        if not self.stages:
            return [()]
        return [s.members for s in self.stages] + [self.stages[-1].survivors]

    def summary_rows(self, f):
        return [(k, len(s.survivors), s.max_witness_osc(f)) for k, s in enumerate(self.stages)]

    def as_dict(self, f):
        out = {"epsilon": self.epsilon, "mode": self.mode,
               "stages": [s.as_dict(f) for s in self.stages]}
        out["outcome"] = {"Dz": self.dz} if self.finite else {"stalled_at": self.stalled_at}
        return out


def dz_index(f, eps, mode="exact", tol=None, capacity=None, domain=None, max_stages=None):
    """Iterate the derivation until the set is empty or stops shrinking."""
    tol = tol or Tolerances()
    eps = _check_eps(eps)
    D = resolve_subset(f, domain)
    stages = []
    limit = max_stages or (len(D) + 1)
    while len(D):
        st = derive_once(f, D, eps, mode, tol, capacity)
        stages.append(st)
        if len(st.survivors) == len(D):
            return DerivationTrace(eps, mode, stages, stalled_at=len(stages) - 1, tolerances=tol)
        D = np.asarray(st.survivors, dtype=int)
        if len(stages) >= limit and len(D):
            return DerivationTrace(eps, mode, stages, stalled_at=len(stages), tolerances=tol)
    return DerivationTrace(eps, mode, stages, dz=len(stages), tolerances=tol)


# --------------------------------------------------------------------------
# slice search


def _exact_feasible(n, d, capacity):
    try:
        _check_capacity(n, d, capacity)
    except CapacityError:
        return False
    return True


def _strict_cap(f, D, eps):
    """Largest value distance in ``D`` strictly below ``eps`` (or 0)."""
    vals = f.distances[np.ix_(D, D)]
    below = vals[vals < eps]
    return float(below.max()) if below.size else 0.0


def find_small_slice(f, A=None, eps=None, tol=None, rng=None, capacity=None):
    """A nonempty slice of ``A`` with oscillation ``< eps``.

    Tries the denting test at every point, then random directions at the
    scheduled depths. Returns ``None`` only when exact enumeration certifies
    that no slice qualifies; raises :class:`InconclusiveError` when neither
    a slice nor a certificate was found.
    """
    tol = tol or Tolerances()
    eps = _check_eps(eps)
    D = resolve_subset(f, A)
    if len(D) == 0:
        raise DomainError("slice search on an empty set")
    pts = f.domain.points
    if len(D) == 1:
        u = np.zeros(pts.shape[1])
        u[0] = 1.0
        return Slice(u, 1.0, (int(D[0]),))
    best = None
    for i in D:
        res = denting_test(f, int(i), eps, tol, D)
        if res.denting:
            o = oscillation(f, res.slice.members)
            if o < eps:
                return res.slice
            if best is None or o < best[0]:
                best = (o, res.slice)
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(tol.budget):
        u = rng.standard_normal(pts.shape[1])
        u /= np.linalg.norm(u)
        for t in tol.t_schedule:
            members = slice_indices(pts, D, u, t, tol)
            o = oscillation(f, members)
            if o < eps:
                return Slice(u, t, tuple(int(j) for j in members))
            if best is None or o < best[0]:
                best = (o, Slice(u, t, tuple(int(j) for j in members)))
    if _exact_feasible(len(D), pts.shape[1], capacity):
        mask, wit = exact_removals(f, D, _strict_cap(f, D, eps), tol, capacity)
        for i in D[mask]:
            sl = wit[int(i)]
            if oscillation(f, sl.members) < eps:
                return sl
        return None
    raise InconclusiveError("no slice found within the search budget",
                            best=None if best is None else best[1])


def product_map(fs):
    """Product of maps on one domain, measured by the max of their metrics."""
    fs = list(fs)
    if not fs:
        raise DomainError("need at least one map")
    dom = fs[0].domain
    for g in fs[1:]:
        if g.domain is not dom and not (
                g.domain.labels == dom.labels and np.array_equal(g.domain.points, dom.points)):
            raise DomainError("maps must share one domain")
    if len(fs) == 1:
        return fs[0]
    T = np.maximum.reduce([g.distances for g in fs])
    return ScoredMap(dom, None, Metric.table(T, validate=False))


def equi_slice(fs, A=None, eps=None, tol=None, rng=None, capacity=None):
    """One slice on which every map in ``fs`` oscillates by less than ``eps``."""
    return find_small_slice(product_map(fs), A, eps, tol, rng, capacity)


# --------------------------------------------------------------------------
# Lancien check and continuity modulus


@dataclass(frozen=True)
class LancienReport:
    checked: int
    skipped: int
    violations: list

    @property
    def passed(self):
        return not self.violations


def lancien_check(f, eps, trace, trials=100, rng=None, tol=None):
    """Sample slices of each stage set that miss the next stage.

    Every such slice should oscillate by at most ``2 * eps``; violations are
    collected as ``(stage, u, t, oscillation)``.
    """
    tol = tol or trace.tolerances
    rng = rng if rng is not None else np.random.default_rng(0)
    pts = f.domain.points
    checked = skipped = 0
    bad = []
    bound = 2 * eps + tol.osc_tol
    for k, st in enumerate(trace.stages):
        D = np.asarray(st.members, dtype=int)
        S = np.asarray(st.survivors, dtype=int)
        if len(S) == len(D):
            continue
        for _ in range(trials):
            u = rng.standard_normal(pts.shape[1])
            u /= np.linalg.norm(u)
            proj = pts[D] @ u
            sup = proj.max()
            if len(S):
                t_max = sup - float(np.max(pts[S] @ u))
            else:
                t_max = sup - proj.min() + 1.0
            if t_max <= 2 * tol.sep_tol:
                skipped += 1
                continue
            t = float(rng.uniform(tol.sep_tol, t_max))
            members = slice_indices(pts, D, u, t, tol)
            if len(S) and np.intersect1d(members, S).size:
                skipped += 1
                continue
            checked += 1
            o = oscillation(f, members)
            if o > bound:
                bad.append((k, u.tolist(), t, o))
    return LancienReport(checked, skipped, bad)


@dataclass(frozen=True)
class ModulusTable:
    """Pairs ``(eps, delta(eps))``; ``math.inf`` when no pair qualifies."""

    eps: tuple
    delta: tuple

    def __call__(self, eps):
        for e, d in zip(self.eps, self.delta):
            if math.isclose(e, eps, rel_tol=1e-12):
                return d
        raise DomainError(f"eps={eps} not on the tabulated grid")

    def rows(self):
        return list(zip(self.eps, self.delta))


def modulus_delta(f, eps_grid, p=2, rel_tol=1e-9):
    """Least domain distance between points whose values differ by ``>= eps``.

    Value distances within ``rel_tol`` (relative) of ``eps`` count as
    reaching it, so grid spacings survive rounding.
    """
    if len(f.domain) < 2:
        raise DomainError("modulus needs at least two points")
    P = pairwise_lp(f.domain.points, p=p)
    V = f.distances
    iu = np.triu_indices(len(f.domain), 1)
    P, V = P[iu], V[iu]
    out = []
    eps_grid = [_check_eps(e) for e in eps_grid]
    for e in eps_grid:
        q = V >= e * (1 - rel_tol)
        out.append(float(P[q].min()) if q.any() else math.inf)
    return ModulusTable(tuple(eps_grid), tuple(out))
