"""K-fold cross-fitted nuisance models and the estimators built on them."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.metrics import average_precision_score

from ..data import TabularDataset, child_seed, is_binary, make_rng
from ..exceptions import EstimationError
from .ate import NUISANCE_ESTIMATORS, NuisanceEstimates
from .learners import BaseLearnerSpec, fit_base_learner

DEFAULT_EPS = 0.01


def _features(d: TabularDataset, features: str):
    if features == "proxies":
        if d.proxies is None:
            raise EstimationError("dataset has no proxy matrix; use features='covariates'")
        return d.proxies
    if features == "covariates":
        return d.covariates
    if features == "both":
        if d.proxies is None:
            return d.covariates
        return sp.hstack([sp.csr_matrix(d.covariates), d.proxies], format="csr")
    raise ValueError(f"features must be 'proxies', 'covariates' or 'both', got {features!r}")


def fold_assignment(n: int, k_folds: int, rng) -> np.ndarray:
    """Random near-equal fold labels ``0..k_folds-1``."""
    if k_folds < 2:
        raise ValueError("k_folds must be at least 2")
    if n < k_folds:
        raise EstimationError(f"{n} rows cannot be split into {k_folds} folds")
    rng = make_rng(rng)
    return np.arange(n)[rng.permutation(n)] % k_folds


def _predict(model, X):
    return model.predict_proba(X)[:, 1]


def crossfit_nuisances(
    d: TabularDataset,
    spec: BaseLearnerSpec | None = None,
    k_folds: int = 5,
    rng=0,
    *,
    features: str = "proxies",
    eps: float = DEFAULT_EPS,
) -> NuisanceEstimates:
    """Out-of-fold predictions of ``q0``, ``q1``, ``g`` and ``qx``.

    For fold ``j``, ``g`` and ``qx`` are fit on every row outside ``j``;
    ``q0`` and ``q1`` are fit on the control and treated rows outside ``j``
    (separate T-learners). Predictions are made on fold ``j`` only and
    clipped into ``[eps, 1 - eps]``. Outcomes must be binary.
    """
    spec = spec or BaseLearnerSpec()
    rng = make_rng(rng)
    X = _features(d, features)
    t = np.asarray(d.treatment, dtype=float)
    y = d.outcome
    if not is_binary(y):
        raise EstimationError("cross-fitted nuisance models are classifiers and need a binary outcome")
    fold = fold_assignment(d.n_rows, k_folds, rng)
    for j in range(k_folds):
        train = fold != j
        for arm in (0, 1):
            if not np.any(t[train] == arm):
                raise EstimationError(
                    f"training rows outside fold {j} have no T={arm} rows; use fewer folds"
                )

    preds = {name: np.empty(d.n_rows) for name in ("q0", "q1", "g", "qx")}
    for j in range(k_folds):
        test = np.flatnonzero(fold == j)
        train = np.flatnonzero(fold != j)
        t_train = t[train]
        fits = {
            "g": (train, t_train),
            "qx": (train, y[train]),
            "q0": (train[t_train == 0], y[train[t_train == 0]]),
            "q1": (train[t_train == 1], y[train[t_train == 1]]),
        }
        for name, (rows, labels) in fits.items():
            model = fit_base_learner(spec, X[rows], labels, seed=child_seed(rng))
            preds[name][test] = _predict(model, X[test])

    for name in preds:
        preds[name] = np.clip(preds[name], eps, 1.0 - eps)
    return NuisanceEstimates(
        **preds,
        fold_id=fold,
        eps=eps,
        provenance={"learner": spec.to_dict(), "k_folds": k_folds, "features": features},
    )


def nuisance_average_precision(d: TabularDataset, nuis: NuisanceEstimates) -> dict:
    """Held-out average precision of each nuisance model against its own target.

    ``q0`` / ``q1`` are scored on the control / treated rows; ``g`` against
    ``T``; ``qx`` against ``Y`` on all rows.
    """
    t = np.asarray(d.treatment)
    y = d.outcome
    out = {"g": average_precision_score(t, nuis.g), "qx": average_precision_score(y, nuis.qx)}
    for name, arm in (("q0", 0), ("q1", 1)):
        rows = t == arm
        out[name] = average_precision_score(y[rows], getattr(nuis, name)[rows]) if y[rows].any() else float("nan")
    return {k: float(v) for k, v in out.items()}


class CrossFitATE(BaseEstimator):
    """Cross-fitted ATE estimator in the scikit-learn style.

    Parameters
    ----------
    estimator : {"q", "iptw", "aiptw", "dml"}
    learner : BaseLearnerSpec, optional
    k_folds : int
    features : {"proxies", "covariates", "both"}
    eps : float
        Clipping level for all predicted probabilities.
    random_state : int
        Seeds the fold split and the learners.

    Attributes
    ----------
    nuisances_ : NuisanceEstimates
    estimates_ : dict
        All four estimates from the same nuisances.
    ate_ : float
        The estimate named by ``estimator``.
    """

    def __init__(self, estimator="aiptw", learner=None, k_folds=5, features="proxies", eps=DEFAULT_EPS, random_state=0):
        self.estimator = estimator
        self.learner = learner
        self.k_folds = k_folds
        self.features = features
        self.eps = eps
        self.random_state = random_state

    def fit(self, d: TabularDataset, y=None):
        if self.estimator not in NUISANCE_ESTIMATORS:
            raise ValueError(f"estimator must be one of {sorted(NUISANCE_ESTIMATORS)}")
        self.nuisances_ = crossfit_nuisances(
            d, self.learner, self.k_folds, self.random_state, features=self.features, eps=self.eps
        )
        self.estimates_ = {name: fn(d, self.nuisances_) for name, fn in NUISANCE_ESTIMATORS.items()}
        self.estimate_ = self.estimates_[self.estimator]
        self.ate_ = self.estimate_.point_estimate
        return self

    def __call__(self, d: TabularDataset) -> float:
        return self.fit(d).ate_
