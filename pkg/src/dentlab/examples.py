"""Generators for test clouds, trees, and the maps built on them."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError, PreconditionError
from .geometry import (
    Metric,
    PointCloud,
    ScoredMap,
    Tolerances,
    _parse_p,
    hull_membership,
    lp_norm,
    pairwise_lp,
)

__all__ = [
    "gen_standard",
    "TreeSpec",
    "TreeCloud",
    "gen_tree",
    "gen_norm_one_map",
    "SeparatingMetric",
    "gen_sep_metric",
    "MartingaleLevel",
    "MartingaleRun",
    "martingale_run",
]

_SHAPES = ("grid", "simplex", "ball", "square")
_MAX_POINTS = 1_000_000


def gen_standard(shape, d=1, n=21, seed=0):
    """Deterministic standard clouds.

    ``grid``: ``n`` points per axis on ``[0, 1]^d``; ``simplex``: barycentric
    lattice of level ``n`` on the standard ``d``-simplex (``n = 1`` gives the
    vertices); ``ball``: ``n`` seeded uniform samples of the unit ball;
    ``square``: the ``2^d`` vertices of the unit cube (``n`` is ignored).
    """
    if shape not in _SHAPES:
        raise DomainError(f"unknown shape {shape!r}; choose from {', '.join(_SHAPES)}")
    d, n = int(d), int(n)
    if d < 1 or n < 1:
        raise DomainError("need d >= 1 and n >= 1")
    if shape == "grid":
        if n ** d > _MAX_POINTS:
            raise DomainError("grid too large")
        axis = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
        X = np.array(list(itertools.product(axis, repeat=d)))
    elif shape == "simplex":
        if math.comb(n + d, d) > _MAX_POINTS:
            raise DomainError("simplex lattice too large")
        rows = [c for c in itertools.product(range(n + 1), repeat=d) if sum(c) <= n]
        X = np.array(rows, dtype=float) / n
    elif shape == "ball":
        rng = np.random.default_rng(seed)
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        X = g * rng.random(n)[:, None] ** (1.0 / d)
    else:
        if d > 16:
            raise DomainError("cube vertices limited to d <= 16")
        X = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
    return PointCloud(X)


# --------------------------------------------------------------------------
# separated trees


@dataclass(frozen=True)
class TreeSpec:
    """Parameters of a separated averaging tree.

    ``slack`` scales an optional averaging defect ``slack * sep / 2^(|s|+3)``
    at node ``s``; zero gives exact averaging.
    """

    depth: int = 3
    separation: float = 1.0
    branching: int = 2
    slack: float = 0.0

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise DomainError("tree depth must be an integer >= 1")
        if int(self.branching) != self.branching or self.branching < 2:
            raise DomainError("branching must be an integer >= 2")
        if not self.separation > 0:
            raise DomainError("separation must be positive")
        if not 0 <= self.slack < 1:
            raise DomainError("slack must lie in [0, 1)")
        if self.branching ** self.depth > 4096:
            raise DomainError("tree too large: branching**depth must stay <= 4096")

    @property
    def dim(self):
        return self.branching ** self.depth


@dataclass(frozen=True, eq=False)
class TreeCloud:
    """Tree nodes embedded in ``R^m`` with the sup norm.

    ``words[i]`` is the address of point ``i``; ``children[i]`` lists the
    indices of its children (empty for leaves). ``fmap`` is the distance to
    the odd-level nodes.
    """

    spec: TreeSpec
    cloud: PointCloud
    words: tuple
    children: dict
    fmap: ScoredMap
    odd: tuple = field(default=())

    @property
    def levels(self):
        return np.array([len(w) for w in self.words])

    def identity(self):
        return ScoredMap.identity(self.cloud, p=math.inf)

    def combos(self):
        """Equal-weight child combinations for every internal node."""
        b = self.spec.branching
        return {i: [(c, Fraction(1, b)) for c in ch] for i, ch in self.children.items() if ch}

    def leaves(self):
        return tuple(i for i, ch in self.children.items() if not ch)


def gen_tree(spec):
    """Haar-type tree whose nodes are ``separation`` apart in the sup norm.

    Each internal node owns ``branching - 1`` fresh coordinates. Its children
    step by ``separation * v_n`` with ``v_n = e_n`` for ``n < branching`` and
    ``v_last = -(e_1 + ... + e_{branching-1})``, so the parent is the exact
    mean of its children. The last coordinate is spare and carries the
    optional averaging defect.
    """
    if not isinstance(spec, TreeSpec):
        spec = TreeSpec(**dict(spec))
    b, D, c = spec.branching, spec.depth, spec.separation
    m = spec.dim
    words = [()]
    pts = [np.zeros(m)]
    children = {}
    next_block = 0
    k = 0
    while k < len(words):
        w = words[k]
        if len(w) < D:
            block = list(range(next_block, next_block + b - 1))
            next_block += b - 1
            if next_block > m - 1:
                raise DomainError("embedding dimension too small for the tree")
            kids = []
            defect = spec.slack * c / 2 ** (len(w) + 3)
            for n in range(1, b + 1):
                step = np.zeros(m)
                if n < b:
                    step[block[n - 1]] = 1.0
                else:
                    step[block] = -1.0
                x = pts[k] + c * step
                x[m - 1] += defect
                words.append(w + (n,))
                pts.append(x)
                kids.append(len(words) - 1)
            children[k] = tuple(kids)
        else:
            children[k] = ()
        k += 1
    X = np.array(pts)
    labels = tuple("t" + "".join(str(n) for n in w) if b < 10 else
                   "t" + ".".join(str(n) for n in w) for w in words)
    cloud = PointCloud(X, labels)
    odd = tuple(i for i, w in enumerate(words) if len(w) % 2 == 1)
    dist = pairwise_lp(X, X[list(odd)], p=math.inf).min(axis=1)
    fmap = ScoredMap(cloud, dist, Metric.lp(math.inf),
                     _dist_to_set(X[list(odd)], math.inf))
    return TreeCloud(spec, cloud, tuple(words), children, fmap, odd)


def _dist_to_set(S, p):
    S = np.array(S, dtype=float)

    def func(Y):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        return pairwise_lp(Y, S, p=p).min(axis=1)

    return func


# --------------------------------------------------------------------------
# norm-one map and separating metric


def gen_norm_one_map(C, g, p=2, lip_tol=1e-12):
    """``x -> (g(x)/diam, 1 - g(x)/diam)`` into ``R^2`` with the l1 norm.

    ``g`` must be a real-valued 1-Lipschitz map (for the ``l^p`` norm on
    ``C``) with a zero and values in ``[0, diam(C)]``.
    """
    if g.domain is not C and not np.array_equal(g.domain.points, C.points):
        raise DomainError("g must be sampled on C")
    vals = g.scalar()
    diam = C.diameter(p)
    P = pairwise_lp(C.points, p=p)
    V = np.abs(vals[:, None] - vals[None, :])
    if np.any(V > P + lip_tol * max(1.0, diam)):
        raise DomainError("g is not 1-Lipschitz on the samples")
    if not np.any(vals == 0):
        raise DomainError("g must vanish at some sample")
    if np.any(vals < 0) or np.any(vals > diam + lip_tol * max(1.0, diam)):
        raise DomainError("g must take values in [0, diam(C)]")
    a = vals / diam if diam > 0 else np.zeros_like(vals)
    F = np.column_stack((a, 1.0 - a))
    func = None
    if g.func is not None and diam > 0:
        gf = g.func

        def func(Y):
            r = np.asarray(gf(Y), dtype=float).reshape(-1) / diam
            return np.column_stack((r, 1.0 - r))

    return ScoredMap(C, F, Metric.lp(1), func)


class SeparatingMetric(NamedTuple):
    metric: Metric
    separating: bool


def gen_sep_metric(C, functionals, p=2):
    """Table metric ``sum_n 2^-n |x_n*(x - y)|`` over the given functionals.

    Each functional must have dual norm at most one for the ``l^p`` norm on
    ``C``. ``separating`` is ``False`` when two distinct points agree on every
    functional; the table is then only a pseudometric.
    """
    Fs = np.atleast_2d(np.asarray(functionals, dtype=float))
    if Fs.size == 0:
        raise DomainError("need at least one functional")
    if Fs.shape[1] != C.dim:
        raise DomainError("functional dimension does not match the cloud")
    p = _parse_p(p)
    q = math.inf if p == 1 else (1.0 if math.isinf(p) else 2.0)
    if np.any(lp_norm(Fs, q, axis=1) > 1 + 1e-12):
        raise DomainError("functionals must have dual norm at most one")
    w = 2.0 ** -np.arange(1, Fs.shape[0] + 1)
    proj = C.points @ Fs.T
    T = np.zeros((len(C), len(C)))
    for k in range(Fs.shape[0]):
        T += w[k] * np.abs(proj[:, k, None] - proj[None, :, k])
    np.fill_diagonal(T, 0.0)
    T = (T + T.T) / 2
    off = ~np.eye(len(C), dtype=bool)
    distinct = pairwise_lp(C.points) > 0
    separating = not np.any((T == 0) & off & distinct)
    return SeparatingMetric(Metric.table(T), separating)


# --------------------------------------------------------------------------
# martingale refinement


@dataclass(frozen=True)
class MartingaleLevel:
    """Checks for the step from ``g_n`` to ``g_{n+1}``."""

    n: int
    residual: float
    control_gain: float
    budget: float
    min_separation: float
    l1_separation: float
    max_combination_error: float
    refines: bool
    measurable: bool

    @property
    def conditions(self):
        return {
            "partition": self.refines,
            "measurable": self.measurable,
            "separation": self.min_separation_ok,
            "residual": bool(self.residual <= self.control_gain + self.budget),
        }

    min_separation_ok: bool = True


@dataclass(frozen=True, eq=False)
class MartingaleRun:
    """Interval partitions ``pi_n`` and step maps ``g_n`` with level checks.

    ``partitions[n]`` is a list of ``(a, b)`` Fraction intervals and
    ``values[n][i]`` is the cloud index taken by ``g_n`` on interval ``i``.
    """

    epsilon: float
    partitions: list
    values: list
    levels: list
    residual_sum: float
    residual_bound: float

    @property
    def implied_martingale_separation(self):
        return self.epsilon / 2

    @property
    def passed(self):
        return all(all(lv.conditions.values()) for lv in self.levels) and (
            self.residual_sum <= self.residual_bound)

    def as_dict(self, labels=None):
        lab = (lambda i: labels[i]) if labels is not None else (lambda i: i)
        return {
            "epsilon": self.epsilon,
            "partitions": [[[str(a), str(b)] for a, b in part] for part in self.partitions],
            "values": [[lab(i) for i in vals] for vals in self.values],
            "levels": [dict(n=lv.n, residual=lv.residual, control_gain=lv.control_gain,
                            budget=lv.budget, min_separation=lv.min_separation,
                            l1_separation=lv.l1_separation,
                            max_combination_error=lv.max_combination_error,
                            conditions=lv.conditions) for lv in self.levels],
            "residual_sum": self.residual_sum,
            "residual_bound": self.residual_bound,
            "implied_martingale_separation": self.implied_martingale_separation,
            "passed": self.passed,
        }


_DENOM = 2 ** 20


def _round_weights(w):
    """Weights on the grid ``k / 2^20`` summing exactly to one."""
    w = np.asarray(w, dtype=float)
    w = w / w.sum()
    scaled = w * _DENOM
    base = np.floor(scaled).astype(np.int64)
    short = _DENOM - int(base.sum())
    order = np.argsort(-(scaled - base), kind="stable")
    base[order[:short]] += 1
    return [Fraction(int(k), _DENOM) for k in base]


def _far_combination(F, i, eps, tol):
    far = np.flatnonzero(F.distances[i] >= eps)
    if far.size == 0:
        return None
    res = hull_membership(F.domain.points[i], F.domain.points[far], tol)
    if not res.inside:
        return None
    keep = res.weights > 0
    lam = _round_weights(res.weights[keep])
    pairs = [(int(j), l) for j, l in zip(far[keep], lam) if l > 0]
    return pairs


def _local_delta(F, f, i, eps, p):
    """``inf |x_i - y|`` over samples whose F or f value moves by more than eps."""
    dx = pairwise_lp(F.domain.points[i:i + 1], F.domain.points, p=p)[0]
    moved = F.distances[i] > eps
    if f is not None:
        fv = f.scalar()
        moved |= np.abs(fv - fv[i]) > eps
    return float(dx[moved].min()) if moved.any() else math.inf


def martingale_run(F, eps, N, control=None, start=None, combos=None, tol=None, p=None):
    """Refine step maps on ``[0, 1]`` through far convex combinations.

    Starting from a point nearly maximising the control ``control`` (zero if
    omitted), every value ``x_i`` of ``g_n`` is replaced on its interval by
    points ``x_ij`` with ``|F(x_ij) - F(x_i)| >= eps`` whose weights
    ``lambda_ij`` average back to ``x_i``. Weights are taken from ``combos``
    when given and otherwise from a hull certificate; they are rounded to
    multiples of ``2^-20`` and the rounding flows into the residuals.
    """
    tol = tol or Tolerances()
    if F.metric.kind != "lp":
        raise DomainError("martingale runs need vector values")
    if not eps > 0:
        raise DomainError("eps must be positive")
    N = int(N)
    if N < 0:
        raise DomainError("N must be nonnegative")
    p = F.metric.p if p is None else _parse_p(p)
    n_pts = len(F.domain)
    fv = control.scalar() if control is not None else np.zeros(n_pts)
    if start is None:
        start = int(np.argmax(fv))
    elif fv[start] < fv.max() - eps / 16:
        raise PreconditionError("start point does not nearly maximise the control")
    X, V = F.domain.points, F.values
    partitions = [[(Fraction(0), Fraction(1))]]
    values = [[int(start)]]
    levels = []
    for n in range(N):
        part, vals = partitions[-1], values[-1]
        new_part, new_vals, parent = [], [], []
        residual = gain = 0.0
        comb_err = 0.0
        for k, ((a, b), i) in enumerate(zip(part, vals)):
            pairs = combos.get(i) if combos is not None else _far_combination(F, i, eps, tol)
            if not pairs:
                raise PreconditionError(
                    f"point {F.domain.labels[i]} is not a far convex combination at eps={eps}")
            if sum(l for _, l in pairs) != 1:
                raise PreconditionError("combination weights must sum to one")
            length = b - a
            lo = a
            for j, lam in pairs:
                hi = lo + lam * length
                new_part.append((lo, hi))
                new_vals.append(int(j))
                parent.append(k)
                lo = hi
            js = np.array([j for j, _ in pairs])
            lam = np.array([float(l) for _, l in pairs])
            m = float(length)
            residual += m * float(lp_norm(lam @ V[js] - V[i], p))
            gain += m * (float(lam @ fv[js]) - fv[i])
            err = float(lp_norm(lam @ X[js] - X[i], p))
            delta = _local_delta(F, control, i, eps / 2 ** (n + 5), p)
            comb_err = max(comb_err, err / delta if delta > 0 else math.inf)
        sep = [float(lp_norm(V[new_vals[q]] - V[vals[parent[q]]], p)) for q in range(len(new_vals))]
        widths = [float(hi - lo) for lo, hi in new_part]
        refines = _refines(part, new_part, parent)
        measurable = len(new_vals) == len(new_part)
        lv = MartingaleLevel(
            n=n, residual=residual, control_gain=gain, budget=eps / 2 ** (n + 3),
            min_separation=min(sep), l1_separation=float(np.dot(widths, sep)),
            max_combination_error=comb_err, refines=refines, measurable=measurable,
            min_separation_ok=min(sep) >= eps * (1 - tol.osc_tol))
        levels.append(lv)
        partitions.append(new_part)
        values.append(new_vals)
    total = float(sum(lv.residual for lv in levels))
    return MartingaleRun(float(eps), partitions, values, levels, total, eps / 16 + eps / 8)


def _refines(part, new_part, parent):
    """Each new interval sits inside its parent and the new cells tile [0, 1]."""
    if new_part[0][0] != 0 or new_part[-1][1] != 1:
        return False
    for (lo, hi), (nlo, nhi) in zip(new_part, new_part[1:]):
        if hi != nlo:
            return False
    for (lo, hi), k in zip(new_part, parent):
        a, b = part[k]
        if lo < a or hi > b or hi < lo:
            return False
    return True
