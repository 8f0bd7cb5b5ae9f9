"""scikit-learn style wrappers around the derivation and the envelope."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dcapprox import build_renorm, moreau_envelope
from .dentability import dz_index
from .geometry import PointCloud, ScoredMap, Tolerances

__all__ = ["DentabilityIndex", "MoreauEnvelope", "DentabilityRenorm"]


def _scored(X, y, p=2):
    X = check_array(X, ensure_2d=True, dtype=float)
    cloud = PointCloud(X)
    if y is None:
        return ScoredMap.identity(cloud, p)
    y = check_array(np.asarray(y), ensure_2d=False, dtype=float)
    if y.shape[0] != X.shape[0]:
        raise ValueError(f"X has {X.shape[0]} samples but y has {y.shape[0]}")
    return ScoredMap(cloud, y)


class DentabilityIndex(BaseEstimator):
    """Derivation of the map ``X -> y`` (identity when ``y`` is omitted).

    After ``fit``: ``trace_``, ``dz_`` (``None`` on a stall), ``stalled_at_``
    and ``labels_``, the stage at which each sample was removed (``-1`` for
    samples left in a fixed set).
    """

    def __init__(self, eps=0.4, mode="exact", p=2, sep_tol=1e-9, osc_tol=1e-9,
                 capacity=None):
        self.eps = eps
        self.mode = mode
        self.p = p
        self.sep_tol = sep_tol
        self.osc_tol = osc_tol
        self.capacity = capacity

    def fit(self, X, y=None):
        f = _scored(X, y, self.p)
        tol = Tolerances(sep_tol=self.sep_tol, osc_tol=self.osc_tol)
        self.trace_ = dz_index(f, self.eps, self.mode, tol, self.capacity)
        self.dz_ = self.trace_.dz
        self.stalled_at_ = self.trace_.stalled_at
        labels = np.full(len(f.domain), -1, dtype=int)
        for k, st in enumerate(self.trace_.stages):
            labels[list(st.removed)] = k
        self.labels_ = labels
        self.n_features_in_ = f.domain.dim
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X, y).labels_


class MoreauEnvelope(RegressorMixin, BaseEstimator):
    """Envelope ``f_n`` of sampled values, evaluable anywhere."""

    def __init__(self, n=1.0):
        self.n = n

    def fit(self, X, y):
        self.map_ = _scored(X, y)
        self.n_features_in_ = self.map_.domain.dim
        return self

    def _approx(self, X):
        check_is_fitted(self, "map_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return moreau_envelope(self.map_, self.n, PointCloud(X))

    def predict(self, X):
        return self._approx(X).values

    def split(self, X):
        """Convex parts ``(g, h)`` at ``X`` with ``predict(X) = g - h``."""
        ap = self._approx(X)
        return ap.g, ap.h


class DentabilityRenorm(TransformerMixin, BaseEstimator):
    """The renorming function ``F`` built from derivation chains.

    ``transform`` returns ``F(X)`` as a single column.
    """

    def __init__(self, K=2, mode="exact", capacity=None):
        self.K = K
        self.mode = mode
        self.capacity = capacity

    def fit(self, X, y=None):
        f = _scored(X, y)
        self.renorm_ = build_renorm(f, self.K, self.mode, capacity=self.capacity)
        self.n_features_in_ = f.domain.dim
        return self

    def transform(self, X):
        check_is_fitted(self, "renorm_")
        X = check_array(X, dtype=float)
        return self.renorm_(X)[:, None]
