import numpy as np
import pytest
import scipy.sparse as sp

from rctsubsample.data import TabularDataset
from rctsubsample.estimators import crossfit
from rctsubsample.estimators.crossfit import (
    CrossFitATE,
    crossfit_nuisances,
    fold_assignment,
    nuisance_average_precision,
)
from rctsubsample.estimators.learners import BaseLearnerSpec
from rctsubsample.exceptions import EstimationError


class _SpyModel:
    """Records the row ids it was trained on and predicts its training label mean."""

    log = []

    def __init__(self, X, y):
        self.ids = set(np.asarray(X[:, 0]).ravel().astype(int).tolist())
        self.rate = float(np.mean(y))
        _SpyModel.log.append(self)

    def predict_proba(self, X):
        ids = np.asarray(X[:, 0]).ravel().astype(int)
        assert not self.ids.intersection(ids.tolist()), "row predicted by a model trained on it"
        self.predicted = ids
        p = np.full(len(ids), self.rate)
        return np.column_stack([1 - p, p])


def _toy(n=100, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, 2, n)
    y = (rng.random(n) < 0.3 + 0.2 * t).astype(float)
    c = rng.integers(0, 2, n).astype(float)
    return TabularDataset(np.column_stack([np.arange(n, dtype=float), c]), t, y, ("id", "C"))


def test_fold_assignment_balanced_and_reproducible():
    f = fold_assignment(103, 5, 4)
    np.testing.assert_array_equal(f, fold_assignment(103, 5, 4))
    counts = np.bincount(f)
    assert counts.max() - counts.min() <= 1
    with pytest.raises(ValueError):
        fold_assignment(10, 1, 0)
    with pytest.raises(EstimationError):
        fold_assignment(3, 5, 0)


def test_each_row_predicted_once_by_model_excluding_its_fold(monkeypatch):
    _SpyModel.log = []
    monkeypatch.setattr(crossfit, "fit_base_learner", lambda spec, X, y, seed: _SpyModel(X, y))
    d = _toy(100)
    nuis = crossfit_nuisances(d, k_folds=5, rng=1, features="covariates")
    assert len(_SpyModel.log) == 5 * 4
    t = d.treatment
    for j in range(5):
        models = _SpyModel.log[4 * j : 4 * j + 4]
        fold_rows = set(np.flatnonzero(nuis.fold_id == j).tolist())
        g, qx, q0, q1 = models
        assert g.ids == qx.ids == set(range(100)) - fold_rows
        assert q0.ids == {i for i in g.ids if t[i] == 0}
        assert q1.ids == {i for i in g.ids if t[i] == 1}
        for m in models:
            assert set(m.predicted.tolist()) == fold_rows
    # every row covered by exactly one fold
    assert sorted(np.concatenate([m.predicted for m in _SpyModel.log[::4]]).tolist()) == list(range(100))


def test_predictions_clipped():
    rng = np.random.default_rng(2)
    c = rng.integers(0, 2, 300)
    t = rng.integers(0, 2, 300)
    # Y = C exactly, so unclipped outcome models would approach 0 and 1
    d = TabularDataset(c.reshape(-1, 1).astype(float), t, c.astype(float), ("C",))
    nuis = crossfit_nuisances(d, k_folds=3, rng=0, features="covariates", eps=0.05)
    for name in ("q0", "q1", "g", "qx"):
        v = getattr(nuis, name)
        assert v.min() >= 0.05 and v.max() <= 0.95
    assert nuis.qx.min() == 0.05 and nuis.qx.max() == 0.95
    assert nuis.eps == 0.05
    assert nuis.provenance["k_folds"] == 3


def test_outcome_independent_of_features_gives_mean():
    rng = np.random.default_rng(3)
    n = 2000
    X = sp.csr_matrix((rng.random((n, 20)) < 0.2).astype(float))
    t = rng.integers(0, 2, n)
    y = (rng.random(n) < 0.3).astype(float)
    d = TabularDataset(np.zeros((n, 1)), t, y, ("C",), proxies=X)
    nuis = crossfit_nuisances(d, BaseLearnerSpec(class_weight=None), k_folds=5, rng=0)
    # strong penalties win under CV, so qx is near flat at the training-fold base rate
    assert np.max(np.abs(nuis.qx - y.mean())) < 0.05


def test_fold_missing_an_arm_suggests_fewer_folds():
    t = np.array([1] * 9 + [0])
    d = TabularDataset(np.arange(10, dtype=float).reshape(-1, 1), t, np.zeros(10), ("C",))
    with pytest.raises(EstimationError, match="fewer folds"):
        crossfit_nuisances(d, k_folds=5, rng=0, features="covariates")


def test_missing_proxies_is_an_error():
    with pytest.raises(EstimationError):
        crossfit_nuisances(_toy(), k_folds=2)


def test_crossfit_estimator_api_and_average_precision():
    rng = np.random.default_rng(5)
    n = 1500
    c = rng.integers(0, 2, n)
    t = (rng.random(n) < np.where(c == 1, 0.8, 0.2)).astype(int)
    y = (rng.random(n) < 0.2 + 0.3 * c + 0.2 * t).astype(float)
    d = TabularDataset(c.reshape(-1, 1).astype(float), t, y, ("C",))
    est = CrossFitATE("aiptw", features="covariates", random_state=0).fit(d)
    assert set(est.estimates_) == {"q", "iptw", "aiptw", "dml"}
    assert est.ate_ == est.estimates_["aiptw"].point_estimate
    assert abs(est.ate_ - 0.2) < 0.1
    ap = nuisance_average_precision(d, est.nuisances_)
    assert set(ap) == {"g", "qx", "q0", "q1"}
    assert ap["g"] > np.mean(t)
    with pytest.raises(ValueError):
        CrossFitATE("tmle", features="covariates").fit(d)
