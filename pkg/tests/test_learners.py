import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize
from sklearn.base import clone
from sklearn.exceptions import ConvergenceWarning

from rctsubsample.estimators.learners import (
    BaseLearnerSpec,
    ElasticNetLogisticRegression,
    ElasticNetLogisticRegressionCV,
    GradientBoostedTreesClassifier,
    fit_base_learner,
)
from rctsubsample.exceptions import ConfigError


def _logistic_data(n=600, p=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    w = np.array([1.5, -2.0, 0.0, 0.5, 0.0][:p])
    y = (rng.random(n) < 1 / (1 + np.exp(-(X @ w - 0.3)))).astype(float)
    return X, y


def _lbfgs_elasticnet(X, y, C, l1_ratio):
    """Reference solution: split w = u - v with u, v >= 0 so the L1 term is smooth."""
    n, p = X.shape
    n1 = y.sum()
    s = np.where(y == 1, n / (2 * n1), n / (2 * (n - n1)))
    a = 1.0 / (C * n)

    def f(theta):
        u, v, b = theta[:p], theta[p : 2 * p], theta[-1]
        w = u - v
        z = X @ w + b
        sig = 1 / (1 + np.exp(-z))
        val = np.sum(s * (np.logaddexp(0, z) - y * z)) / n
        val += a * (l1_ratio * np.sum(u + v) + 0.5 * (1 - l1_ratio) * w @ w)
        r = s * (sig - y) / n
        gw = X.T @ r + a * (1 - l1_ratio) * w
        grad = np.concatenate([gw + a * l1_ratio, -gw + a * l1_ratio, [r.sum()]])
        return val, grad

    bounds = [(0, None)] * (2 * p) + [(None, None)]
    res = minimize(f, np.zeros(2 * p + 1), jac=True, method="L-BFGS-B", bounds=bounds, options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 20000})
    return res.x[:p] - res.x[p : 2 * p], res.x[-1], res.fun


def test_separable_training_accuracy_is_one():
    X = np.array([[0.0, 0.0], [0.2, 0.1], [0.1, 0.3], [2.0, 2.0], [2.2, 1.9], [1.8, 2.3]])
    y = np.array([0, 0, 0, 1, 1, 1])
    m = ElasticNetLogisticRegression(C=10.0).fit(X, y)
    assert np.mean(m.predict(X) == y) == 1.0


def test_all_one_labels_predict_at_least_half():
    X = np.random.default_rng(1).normal(size=(50, 3))
    for model in (ElasticNetLogisticRegressionCV(), GradientBoostedTreesClassifier(n_estimators=5)):
        p = model.fit(X, np.ones(50)).predict_proba(X)[:, 1]
        assert np.all(np.clip(p, 0.01, 0.99) >= 0.5)


def test_objective_not_worse_than_zero_vector():
    X, y = _logistic_data()
    for C in (1e-3, 1e-1, 10.0):
        m = ElasticNetLogisticRegression(C=C).fit(X, y)
        zero = m.objective(X, y, coef=np.zeros(X.shape[1]), intercept=0.0)
        assert m.objective(X, y) <= zero


@pytest.mark.parametrize("C", [0.01, 1.0])
def test_matches_independent_lbfgs_solution(C):
    X, y = _logistic_data(seed=2)
    w_ref, b_ref, f_ref = _lbfgs_elasticnet(X, y, C, 0.1)
    m = ElasticNetLogisticRegression(C=C, l1_ratio=0.1).fit(X, y)
    assert m.converged_
    assert m.objective(X, y) <= f_ref + 1e-9
    # the stopping rule bounds the gradient mapping, so parameter error shrinks with tol
    for tol, atol in ((1e-6, 1e-4), (1e-10, 1e-7)):
        m = ElasticNetLogisticRegression(C=C, l1_ratio=0.1, tol=tol).fit(X, y)
        np.testing.assert_allclose(m.coef_.ravel(), w_ref, atol=atol)
        assert m.intercept_[0] == pytest.approx(b_ref, abs=atol)


def test_strong_l1_gives_exact_zeros():
    X, y = _logistic_data(seed=3)
    m = ElasticNetLogisticRegression(C=1e-3, l1_ratio=1.0).fit(X, y)
    assert np.all(m.coef_ == 0.0)


def test_sparse_and_dense_agree():
    X, y = _logistic_data(seed=4)
    Xb = (X > 0).astype(float)
    dense = ElasticNetLogisticRegression(C=0.5).fit(Xb, y)
    sparse = ElasticNetLogisticRegression(C=0.5).fit(sp.csr_matrix(Xb), y)
    np.testing.assert_allclose(dense.coef_, sparse.coef_, atol=1e-10)


def test_nonconvergence_warns_and_keeps_best_iterate():
    X, y = _logistic_data(seed=5)
    m = ElasticNetLogisticRegression(C=10.0, max_iter=3)
    with pytest.warns(ConvergenceWarning):
        m.fit(X, y)
    assert not m.converged_
    assert m.objective(X, y) <= m.objective(X, y, coef=np.zeros(X.shape[1]), intercept=0.0)


def test_cv_selects_from_grid_and_is_deterministic():
    X, y = _logistic_data(seed=6)
    a = ElasticNetLogisticRegressionCV(random_state=3).fit(X, y)
    b = ElasticNetLogisticRegressionCV(random_state=3).fit(X, y)
    assert a.C_ in a.Cs
    assert a.C_ == b.C_
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    # an informative signal should not pick the strongest penalty
    assert a.C_ > 1e-4


def test_gbt_deterministic_and_fits_nonlinear_signal():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(1500, 2))
    y = ((X[:, 0] * X[:, 1]) > 0).astype(float)
    a = GradientBoostedTreesClassifier(n_estimators=50, random_state=1).fit(X, y)
    b = clone(a).fit(X, y)
    np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))
    assert np.mean(a.predict(X) == y) > 0.9
    # a linear model cannot separate XOR
    lin = ElasticNetLogisticRegression(C=1.0).fit(X, y)
    assert np.mean(lin.predict(X) == y) < 0.7


def test_gbt_sparse_binary_input():
    rng = np.random.default_rng(8)
    X = sp.random(800, 30, density=0.1, format="csr", random_state=8)
    X.data[:] = 1.0
    y = (np.asarray(X[:, 0].todense()).ravel() + (rng.random(800) < 0.1) > 0).astype(float)
    m = GradientBoostedTreesClassifier(n_estimators=20).fit(X, y)
    p = m.predict_proba(X)[:, 1]
    assert np.all((p > 0) & (p < 1))
    assert np.mean((p > 0.5) == y) > 0.85


def test_spec_validation_and_round_trip():
    with pytest.raises(ConfigError):
        BaseLearnerSpec(family="forest")
    with pytest.raises(ConfigError):
        BaseLearnerSpec(l1_ratio=1.5)
    with pytest.raises(ConfigError):
        BaseLearnerSpec(Cs=())
    spec = BaseLearnerSpec(family="gradient_boosted_trees", n_trees=10)
    assert BaseLearnerSpec.from_dict(spec.to_dict()) == spec


def test_fit_base_learner_dispatch():
    X, y = _logistic_data(n=200, seed=9)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        m = fit_base_learner(BaseLearnerSpec(), X, y, seed=1)
    assert isinstance(m, ElasticNetLogisticRegressionCV)
    g = fit_base_learner(BaseLearnerSpec(family="gradient_boosted_trees", n_trees=3), X, y)
    assert isinstance(g, GradientBoostedTreesClassifier) and g.n_estimators == 3
