import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dentlab.estimators import DentabilityIndex, DentabilityRenorm, MoreauEnvelope

GRID = np.linspace(0, 1, 21)[:, None]


def test_index_fit_attributes():
    est = DentabilityIndex(eps=0.4).fit(GRID)
    assert est.dz_ == 2 and est.stalled_at_ is None
    assert list(np.flatnonzero(est.labels_ == 1)) == [9, 10, 11]
    assert np.all(est.labels_ >= 0)


def test_index_with_targets_and_clone():
    est = DentabilityIndex(eps=0.4, mode="cluster")
    other = clone(est).set_params(mode="exact")
    assert est.get_params()["mode"] == "cluster"
    assert other.fit(GRID, np.zeros(21)).dz_ == 1
    assert est.fit_predict(GRID).max() == 2


def test_index_rejects_mismatched_targets():
    with pytest.raises(ValueError):
        DentabilityIndex().fit(GRID, np.zeros(5))


def test_moreau_predict_and_split():
    X = np.linspace(-1, 1, 513)[:, None]
    est = MoreauEnvelope(n=4).fit(X, np.abs(X[:, 0]))
    pred = est.predict(np.array([[0.0], [0.5]]))
    np.testing.assert_allclose(pred, [0.0, 0.5 - 1 / 16], atol=1e-12)
    g, h = est.split(X)
    np.testing.assert_allclose(g - h, est.predict(X), atol=1e-12)


def test_moreau_not_fitted_and_feature_check():
    with pytest.raises(NotFittedError):
        MoreauEnvelope().predict(GRID)
    est = MoreauEnvelope().fit(GRID, GRID[:, 0])
    with pytest.raises(ValueError):
        est.predict(np.zeros((2, 2)))


def test_renorm_transform_even():
    X = np.linspace(-1, 1, 41)[:, None]
    est = DentabilityRenorm(K=2).fit(X)
    Z = est.transform(np.array([[1.5], [-1.5]]))
    assert Z.shape == (2, 1) and Z[0, 0] == Z[1, 0] > 0
