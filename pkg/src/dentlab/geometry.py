"""Finite-dimensional convex geometry on point clouds.

Everything here works on finite samples in ``R^d``: linear functionals act by
the dot product, slices are upper level sets of a functional, and convex-hull
questions are answered by Wolfe's minimum-norm-point algorithm, which returns
both a convex-combination certificate and a separating functional.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import DomainError

__all__ = [
    "Tolerances",
    "Metric",
    "PointCloud",
    "ScoredMap",
    "Slice",
    "HullResult",
    "support",
    "slice_cloud",
    "slice_indices",
    "oscillation",
    "min_norm_point",
    "hull_membership",
    "hull_membership_exact",
    "covering_number",
    "pairwise_lp",
    "lp_norm",
]


def _default_schedule():
    return tuple(2.0 ** -k for k in range(1, 41))


@dataclass(frozen=True)
class Tolerances:
    """Numerical knobs shared by all operations.

    Parameters
    ----------
    sep_tol : float
        Slack for hull membership and for ties at a slice boundary.
    osc_tol : float
        Slack for diameter comparisons. In the derivation it is applied
        relatively (``osc <= eps * (1 + osc_tol)``), elsewhere absolutely.
    t_schedule : tuple of float
        Strictly decreasing slice depths used by profile scans.
    budget : int
        Maximum number of candidate directions in randomized searches.
    """

    sep_tol: float = 1e-9
    osc_tol: float = 1e-9
    t_schedule: tuple = field(default_factory=_default_schedule)
    budget: int = 256

    def __post_init__(self):
        if not (self.sep_tol > 0 and self.osc_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.budget < 1:
            raise DomainError("budget must be a positive integer")
        ts = tuple(float(t) for t in self.t_schedule)
        if not ts or any(t <= 0 for t in ts):
            raise DomainError("t_schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(ts, ts[1:])):
            raise DomainError("t_schedule must be strictly decreasing")
        object.__setattr__(self, "t_schedule", ts)

    def threshold(self, eps):
        """Oscillation cap used when deciding ``osc <= eps``."""
        return eps * (1.0 + self.osc_tol)

    def as_dict(self):
        return {
            "sep_tol": self.sep_tol,
            "osc_tol": self.osc_tol,
            "t_schedule": list(self.t_schedule),
            "budget": self.budget,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "t_schedule" in data:
            data["t_schedule"] = tuple(data["t_schedule"])
        return cls(**data)


def _parse_p(p):
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity", "max"):
            return math.inf
        p = float(p)
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise DomainError(f"unsupported norm exponent p={p!r}; use 1, 2 or inf")
    return p


def lp_norm(v, p=2, axis=-1):
    p = _parse_p(p)
    return np.linalg.norm(np.asarray(v, dtype=float), ord=p, axis=axis)


def pairwise_lp(X, Y=None, p=2):
    """Pairwise ``l^p`` distances between the rows of ``X`` and ``Y``."""
    p = _parse_p(p)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if p == 1.0:
        return cdist(X, Y, "cityblock")
    if p == 2.0:
        return cdist(X, Y, "euclidean")
    return cdist(X, Y, "chebyshev")


@dataclass(frozen=True)
class Metric:
    """Metric on the value space of a map.

    ``kind="lp"`` measures values in ``R^m`` with the ``l^p`` norm;
    ``kind="table"`` carries an explicit symmetric distance table indexed by
    the domain points, so it may be a pseudometric.
    """

    kind: str = "lp"
    p: float = 2.0
    rows: Optional[np.ndarray] = None
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "lp":
            object.__setattr__(self, "p", _parse_p(self.p))
            return
        if self.kind != "table":
            raise DomainError(f"unknown metric kind {self.kind!r}")
        if self.rows is None:
            raise DomainError("table metric needs rows")
        T = np.array(self.rows, dtype=float)
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise DomainError("metric table must be square")
        if not np.all(np.isfinite(T)) or np.any(T < 0):
            raise DomainError("metric table entries must be finite and nonnegative")
        if np.any(np.diag(T) != 0):
            raise DomainError("metric table must vanish on the diagonal")
        scale = max(1.0, float(T.max(initial=0.0)))
        if not np.allclose(T, T.T, rtol=0, atol=1e-12 * scale):
            raise DomainError("metric table must be symmetric")
        if self.validate:
            # d(i,k) <= d(i,j) + d(j,k) for all j
            via = np.full_like(T, np.inf)
            for j in range(T.shape[0]):
                np.minimum(via, T[:, j, None] + T[None, j, :], out=via)
            if np.any(T > via + 1e-12 * scale):
                raise DomainError("metric table violates the triangle inequality")
        T.setflags(write=False)
        object.__setattr__(self, "rows", T)

    @classmethod
    def lp(cls, p=2):
        return cls("lp", p)

    @classmethod
    def table(cls, rows, validate=True):
        return cls("table", rows=rows, validate=validate)

    def as_dict(self):
        if self.kind == "lp":
            return {"kind": "lp", "p": "inf" if math.isinf(self.p) else int(self.p)}
        return {"kind": "table", "rows": self.rows.tolist()}


@dataclass(frozen=True, eq=False)
class PointCloud:
    """A finite labelled subset of ``R^d``."""

    points: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        X = np.array(self.points, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DomainError("points must be an (n, d) array")
        if X.shape[1] < 1:
            raise DomainError("dimension must be at least 1")
        if not np.all(np.isfinite(X)):
            raise DomainError("point coordinates must be finite")
        X.setflags(write=False)
        labels = tuple(str(s) for s in self.labels) if self.labels else tuple(
            f"p{i}" for i in range(X.shape[0]))
        if len(labels) != X.shape[0]:
            raise DomainError("one label per point is required")
        if len(set(labels)) != len(labels):
            raise DomainError("duplicate labels in point cloud")
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return PointCloud(self.points[idx], tuple(self.labels[i] for i in idx))

    def index_of(self, label):
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise DomainError(f"unknown label {label!r}") from None

    def diameter(self, p=2):
        if len(self) < 2:
            return 0.0
        return float(pairwise_lp(self.points, p=p).max())


@dataclass(frozen=True, eq=False)
class ScoredMap:
    """A map sampled on a point cloud with values in a metric space.

    ``values`` is an ``(n, m)`` array for ``lp`` metrics and may be ``None``
    for table metrics. ``func``, when present, evaluates the same map at
    arbitrary points and lets callers avoid snapping to the samples.
    """

    domain: PointCloud
    values: Optional[np.ndarray]
    metric: Metric = field(default_factory=Metric)
    func: Optional[Callable] = None

    def __post_init__(self):
        n = len(self.domain)
        if self.metric.kind == "table":
            if self.metric.rows.shape[0] != n:
                raise DomainError("metric table size must match the domain")
        if self.values is None:
            if self.metric.kind != "table":
                raise DomainError("values are required for lp metrics")
            return
        V = np.array(self.values, dtype=float)
        if V.ndim == 1:
            V = V[:, None]
        if V.shape[0] != n:
            raise DomainError("every domain point needs exactly one value")
        if not np.all(np.isfinite(V)):
            raise DomainError("values must be finite")
        V.setflags(write=False)
        object.__setattr__(self, "values", V)

    @classmethod
    def from_function(cls, domain, func, metric=None):
        vals = np.asarray(func(domain.points), dtype=float)
        return cls(domain, vals, metric or Metric(), func)

    @classmethod
    def identity(cls, domain, p=2):
        return cls(domain, domain.points, Metric.lp(p), lambda X: np.asarray(X, float))

    def __len__(self):
        return len(self.domain)

    @cached_property
    def distances(self):
        """Full ``n x n`` table of value distances (read-only)."""
        if self.metric.kind == "table":
            return self.metric.rows
        D = pairwise_lp(self.values, p=self.metric.p)
        D.setflags(write=False)
        return D

    def value_distance(self, a, b):
        """Distance between two raw values under the lp metric."""
        if self.metric.kind != "lp":
            raise DomainError("raw value distances need an lp metric")
        return float(lp_norm(np.asarray(a, float) - np.asarray(b, float), self.metric.p))

    def scalar(self):
        """Values as a 1-D array; only for real-valued maps."""
        if self.values is None or self.values.shape[1] != 1:
            raise DomainError("map is not real-valued")
        return self.values[:, 0]

    def oscillation(self, idx):
        return oscillation(self, idx)


@dataclass(frozen=True, eq=False)
class Slice:
    """Open slice ``{x : u.x > sup(u) - t}`` of a sampled set.

    ``members`` are sorted indices into the cloud that was sliced (for
    slices of a subset they index the parent domain).
    """

    functional: np.ndarray
    depth: float
    members: tuple

    def __len__(self):
        return len(self.members)

    def labels(self, cloud):
        return [cloud.labels[i] for i in self.members]

    def as_dict(self, cloud=None):
        return {
            "functional": [float(c) for c in self.functional],
            "depth": float(self.depth),
            "members": self.labels(cloud) if cloud is not None else list(self.members),
        }


def _check_functional(u, d):
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != d:
        raise DomainError(f"functional has {u.shape[0]} coefficients, expected {d}")
    if not np.all(np.isfinite(u)):
        raise DomainError("functional must be finite")
    return u


def support(A, u):
    """``max_{x in A} u.x``."""
    if len(A) == 0:
        raise DomainError("support of an empty cloud")
    u = _check_functional(u, A.dim)
    return float(np.max(A.points @ u))


def slice_indices(points, idx, u, t, tol=None):
    """Members of the slice of ``points[idx]`` cut by ``u`` at depth ``t``.

    A point belongs when its gap ``sup - u.x`` is below ``t - sep_tol``;
    points within ``sep_tol`` of the supremum always belong. Points whose gap
    sits within ``sep_tol`` of ``t`` are excluded.
    """
    tol = tol or Tolerances()
    if not t > 0:
        raise DomainError("slice depth must be positive")
    idx = np.asarray(idx, dtype=int)
    if idx.size == 0:
        raise DomainError("slice of an empty set")
    proj = points[idx] @ u
    gap = proj.max() - proj
    keep = (gap < t - tol.sep_tol) | (gap <= tol.sep_tol)
    return np.sort(idx[keep])


def slice_cloud(A, u, t, tol=None):
    """Slice ``S(A, u, t)`` of a point cloud."""
    if len(A) == 0:
        raise DomainError("slice of an empty cloud")
    u = _check_functional(u, A.dim)
    members = slice_indices(A.points, np.arange(len(A)), u, t, tol)
    return Slice(u, float(t), tuple(int(i) for i in members))


def oscillation(f, S):
    """Diameter of ``f(S)``; zero for empty sets and singletons."""
    S = np.asarray(list(S) if not isinstance(S, np.ndarray) else S, dtype=int)
    if S.size < 2:
        return 0.0
    D = f.distances
    return float(D[np.ix_(S, S)].max())


# --------------------------------------------------------------------------
# minimum-norm point in a polytope (Wolfe 1976)


def _affine_minimizer(Q):
    """Coefficients summing to one of the least-norm point of ``aff(Q)``."""
    if Q.shape[0] == 1:
        return np.ones(1)
    q0 = Q[0]
    D = Q[1:] - q0
    a, *_ = np.linalg.lstsq(D.T, -q0, rcond=None)
    return np.concatenate(([1.0 - a.sum()], a))


def min_norm_point(P, rel_tol=1e-12, max_iter=None):
    """Least-norm point of ``conv(P)``.

    Returns ``(x, support, weights)`` with ``x = weights @ P[support]``.
    The stopping rule is relative to ``|x|`` so tiny distances are resolved
    to roughly ``rel_tol * max|p|``.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    k = P.shape[0]
    if k == 0:
        raise DomainError("min-norm point of an empty set")
    sq = np.einsum("ij,ij->i", P, P)
    R = math.sqrt(float(sq.max()))
    i0 = int(np.argmin(sq))
    S = [i0]
    w = np.ones(1)
    x = P[i0].copy()
    if R == 0.0:
        return x, S, w
    max_iter = max_iter or 50 * (k + P.shape[1]) + 100
    w_eps = 1e-14
    for _ in range(max_iter):
        nx = math.sqrt(float(x @ x))
        if nx == 0.0:
            break
        dots = P @ x
        j = int(np.argmin(dots))
        if nx * nx - dots[j] <= rel_tol * nx * R or j in S:
            break
        S.append(j)
        w = np.append(w, 0.0)
        while True:
            v = _affine_minimizer(P[S])
            if np.all(v > w_eps):
                w = v
                break
            step = w - v
            cand = (v <= w_eps) & (step > 0)
            theta = float(np.min(w[cand] / step[cand])) if cand.any() else 1.0
            theta = min(max(theta, 0.0), 1.0)
            w = w + theta * (v - w)
            keep = w > w_eps
            if keep.all():
                keep[int(np.argmin(w))] = False
            S = [s for s, kp in zip(S, keep) if kp]
            w = w[keep]
            w = w / w.sum()
        x_new = w @ P[S]
        if x_new @ x_new >= x @ x * (1 - 1e-15) and len(S) > 1 and nx > 0:
            # no progress: numerically optimal
            x = x_new
            break
        x = x_new
    return x, S, w


@dataclass(frozen=True, eq=False)
class HullResult:
    """Outcome of a hull membership query.

    ``inside`` comes with ``weights`` (convex weights over the rows of the
    queried set, possibly approximate to ``residual``); ``outside`` comes with
    a unit separator ``u`` such that ``u.x >= support(B, u) + margin``.
    """

    inside: bool
    separator: Optional[np.ndarray] = None
    margin: float = 0.0
    weights: Optional[np.ndarray] = None
    residual: float = 0.0
    nearest: Optional[np.ndarray] = None


def _hull_points(x, B, tol):
    x = np.asarray(x, dtype=float).ravel()
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[0] == 0:
        raise DomainError("hull membership against an empty set")
    if B.shape[1] != x.shape[0]:
        raise DomainError("dimension mismatch in hull membership")
    P = B - x
    y, S, w = min_norm_point(P)
    weights = np.zeros(B.shape[0])
    weights[S] = w
    dist = float(np.linalg.norm(y))
    if dist <= tol.sep_tol:
        return HullResult(True, weights=weights, residual=dist, nearest=y + x)
    u = -y / dist
    margin = float(x @ u - np.max(B @ u))
    if margin > tol.sep_tol:
        return HullResult(False, separator=u, margin=margin, nearest=y + x)
    return HullResult(True, weights=weights, residual=dist, nearest=y + x)


def hull_membership(x, B, tol=None):
    """Decide whether ``x`` lies in ``conv(B)``.

    ``B`` is a :class:`PointCloud` or an ``(n, d)`` array. Points closer to
    the hull than ``sep_tol`` count as inside.
    """
    tol = tol or Tolerances()
    pts = B.points if isinstance(B, PointCloud) else B
    return _hull_points(x, pts, tol)


def _solve_exact(cols, rhs):
    """Unique solution of ``sum_j lam_j cols[j] = rhs`` over the rationals.

    Returns ``None`` if the columns are dependent or the system inconsistent.
    """
    m, k = len(rhs), len(cols)
    A = [[cols[j][i] for j in range(k)] + [rhs[i]] for i in range(m)]
    row = 0
    pivots = []
    for c in range(k):
        piv = next((r for r in range(row, m) if A[r][c] != 0), None)
        if piv is None:
            return None
        A[row], A[piv] = A[piv], A[row]
        pv = A[row][c]
        A[row] = [a / pv for a in A[row]]
        for r in range(m):
            if r != row and A[r][c] != 0:
                fac = A[r][c]
                A[r] = [a - fac * b for a, b in zip(A[r], A[row])]
        pivots.append(c)
        row += 1
    if any(A[r][k] != 0 for r in range(row, m)):
        return None
    return [A[i][k] for i in range(k)]


def hull_membership_exact(x, B):
    """Rational-arithmetic membership test for small instances.

    Enumerates affinely independent subsets of at most ``d + 1`` points
    (Caratheodory) and solves for barycentric coordinates exactly. Returns
    ``(inside, weights)`` with ``weights`` a dict ``index -> Fraction``.
    """
    x = [Fraction(float(c)) for c in np.asarray(x, dtype=float).ravel()]
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n, d = B.shape
    if n == 0:
        raise DomainError("hull membership against an empty set")
    Bq = [[Fraction(float(c)) for c in row] for row in B]
    rhs = x + [Fraction(1)]
    for k in range(1, min(n, d + 1) + 1):
        for S in itertools.combinations(range(n), k):
            cols = [Bq[i] + [Fraction(1)] for i in S]
            lam = _solve_exact(cols, rhs)
            if lam is not None and all(v >= 0 for v in lam):
                return True, dict(zip(S, lam))
    return False, {}


def covering_number(A, r, order=None, p=2):
    """Greedy covering count at scale ``r``.

    Scans the points in ``order`` (default: stored order) and opens a new
    center at every point farther than ``2r`` from all open centers. The
    centers are pairwise more than ``2r`` apart, so no cover by fewer balls
    of radius ``r`` exists, while the ``2r`` balls around them cover ``A``.
    """
    if not r > 0:
        raise DomainError("covering radius must be positive")
    X = A.points if isinstance(A, PointCloud) else np.atleast_2d(np.asarray(A, float))
    n = X.shape[0]
    if n == 0:
        return 0
    order = np.arange(n) if order is None else np.asarray(order, dtype=int)
    centers = []
    covered = np.zeros(n, dtype=bool)
    for i in order:
        if covered[i]:
            continue
        centers.append(int(i))
        covered |= pairwise_lp(X[i:i + 1], X, p=p)[0] <= 2 * r
    return len(centers)


def as_cloud(X, labels: Sequence[str] = ()):
    """Coerce an array-like to a :class:`PointCloud`."""
    if isinstance(X, PointCloud):
        return X
    return PointCloud(np.asarray(X, dtype=float), tuple(labels))
