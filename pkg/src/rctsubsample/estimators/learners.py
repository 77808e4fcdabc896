"""Binary classifiers used as nuisance models.

Both follow the scikit-learn estimator protocol (``get_params``, ``fit``,
``predict_proba``) and accept dense arrays or scipy sparse matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, log_expit
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.exceptions import ConvergenceWarning
from sklearn.model_selection import StratifiedKFold
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import ConfigError

DEFAULT_CS = (1e-4, 1e-3, 1e-2, 1e-1, 1e0, 1e1)


def _as_matrix(X):
    return check_array(X, accept_sparse="csr", dtype=np.float64)


def _binary_labels(y):
    y = np.asarray(y, dtype=float).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    return y


def _balanced_weights(y):
    n = len(y)
    n1 = y.sum()
    n0 = n - n1
    classes = int(n0 > 0) + int(n1 > 0)
    w = np.empty(n)
    w[y == 1] = n / (classes * n1) if n1 else 0.0
    w[y == 0] = n / (classes * n0) if n0 else 0.0
    return w


def _spectral_norm_sq(X, n_iter=100):
    """Squared largest singular value of ``[X, 1]`` by power iteration."""
    n, p = X.shape
    v = np.ones(p + 1) / np.sqrt(p + 1)
    s = 0.0
    for _ in range(n_iter):
        u = X @ v[:p] + v[p]
        v_new = np.empty(p + 1)
        v_new[:p] = X.T @ u
        v_new[p] = u.sum()
        s_new = float(np.linalg.norm(v_new))
        if s_new == 0.0:
            return 1.0
        v = v_new / s_new
        if abs(s_new - s) <= 1e-10 * s_new:
            s = s_new
            break
        s = s_new
    return s


class ElasticNetLogisticRegression(ClassifierMixin, BaseEstimator):
    """Logistic regression with an elastic-net penalty, fit by accelerated proximal gradient.

    Minimizes ``C * sum_i s_i * logloss_i + l1_ratio * ||w||_1
    + (1 - l1_ratio) / 2 * ||w||_2^2`` over weights ``w`` and an unpenalized
    intercept, where ``s_i`` are balanced class weights when
    ``class_weight="balanced"`` and 1 otherwise.

    Parameters
    ----------
    C : float
        Inverse regularization strength.
    l1_ratio : float in [0, 1]
    class_weight : "balanced" or None
    tol : float
        Stop when the sup-norm of the proximal gradient mapping falls below it.
    max_iter : int
        Iteration cap; hitting it emits a ``ConvergenceWarning`` and keeps
        the best iterate seen.
    """

    def __init__(self, C=1.0, l1_ratio=0.1, class_weight="balanced", tol=1e-6, max_iter=5000, warm_start=False):
        self.C = C
        self.l1_ratio = l1_ratio
        self.class_weight = class_weight
        self.tol = tol
        self.max_iter = max_iter
        self.warm_start = warm_start

    def _sample_weights(self, y):
        if self.class_weight == "balanced":
            return _balanced_weights(y)
        if self.class_weight is None:
            return np.ones(len(y))
        raise ValueError(f"class_weight must be 'balanced' or None, got {self.class_weight!r}")

    def _penalty_scale(self, n):
        return 1.0 / (self.C * n)

    def objective(self, X, y, coef=None, intercept=None):
        """Penalized objective divided by ``C * n`` at the given (default: fitted) parameters."""
        X = _as_matrix(X)
        y = _binary_labels(y)
        coef = self.coef_.ravel() if coef is None else np.asarray(coef, dtype=float)
        intercept = float(self.intercept_[0] if intercept is None else intercept)
        s = self._sample_weights(y)
        z = X @ coef + intercept
        loss = np.sum(s * (np.logaddexp(0.0, z) - y * z)) / len(y)
        a = self._penalty_scale(len(y))
        r = self.l1_ratio
        return float(loss + a * (r * np.abs(coef).sum() + 0.5 * (1 - r) * coef @ coef))

    def fit(self, X, y):
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ValueError("l1_ratio must lie in [0, 1]")
        if self.C <= 0:
            raise ValueError("C must be positive")
        X = _as_matrix(X)
        y = _binary_labels(y)
        n, p = X.shape
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = p
        self.converged_ = True
        if y.min() == y.max():
            # one observed class: constant prediction with add-one smoothing
            rate = (y.sum() + 0.5) / (n + 1.0)
            self.coef_ = np.zeros((1, p))
            self.intercept_ = np.array([np.log(rate / (1 - rate))])
            self.n_iter_ = 0
            return self

        s = self._sample_weights(y)
        a = self._penalty_scale(n)
        r = self.l1_ratio
        l2 = a * (1 - r)
        L = s.max() * _spectral_norm_sq(X) / (4.0 * n) + l2
        step = 1.0 / L
        thresh = step * a * r

        if self.warm_start and hasattr(self, "coef_") and self.coef_.shape == (1, p):
            w = self.coef_.ravel().copy()
            b = float(self.intercept_[0])
        else:
            w = np.zeros(p)
            p1 = np.average(y, weights=s)
            b = float(np.log(p1 / (1 - p1)))

        def value(z, w_):
            return np.sum(s * (np.logaddexp(0.0, z) - y * z)) / n + a * (r * np.abs(w_).sum() + 0.5 * (1 - r) * w_ @ w_)

        z = X @ w + b
        yw, yb, yz = w, b, z
        t_k = 1.0
        f_x = value(z, w)
        best = (f_x, w, b)
        self.converged_ = False
        it = 0
        for it in range(1, self.max_iter + 1):
            resid = s * (expit(yz) - y) / n
            grad_w = X.T @ resid + l2 * yw
            grad_b = resid.sum()
            v = yw - step * grad_w
            w_new = np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)
            b_new = yb - step * grad_b
            z_new = X @ w_new + b_new
            f_new = value(z_new, w_new)
            mapping = max(np.max(np.abs(yw - w_new), initial=0.0), abs(yb - b_new)) * L
            if f_new < best[0]:
                best = (f_new, w_new, b_new)
            if mapping <= self.tol:
                w, b, z = w_new, b_new, z_new
                self.converged_ = True
                break
            restart = f_new > f_x or (
                (yw - w_new) @ (w_new - w) + (yb - b_new) * (b_new - b) > 0
            )
            if restart:
                t_k = 1.0
                yw, yb, yz = w_new, b_new, z_new
            else:
                t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
                beta = (t_k - 1.0) / t_next
                yw = w_new + beta * (w_new - w)
                yb = b_new + beta * (b_new - b)
                yz = z_new + beta * (z_new - z)
                t_k = t_next
            w, b, z, f_x = w_new, b_new, z_new, f_new

        if not self.converged_:
            f_x, w, b = best
            warnings.warn(
                f"elastic-net logistic regression did not converge in {self.max_iter} iterations (C={self.C})",
                ConvergenceWarning,
            )
        self.coef_ = w.reshape(1, -1)
        self.intercept_ = np.array([b])
        self.n_iter_ = it
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = _as_matrix(X)
        return X @ self.coef_.ravel() + self.intercept_[0]

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)


def _heldout_logloss(model, X, y):
    z = model.decision_function(X)
    return float(-np.mean(y * log_expit(z) + (1 - y) * log_expit(-z)))


class ElasticNetLogisticRegressionCV(ClassifierMixin, BaseEstimator):
    """:class:`ElasticNetLogisticRegression` with ``C`` picked by stratified K-fold log-loss.

    The grid is walked from strongest to weakest regularization with warm
    starts; ties go to the stronger penalty. The final model is refit on all
    rows with the chosen ``C``.
    """

    def __init__(
        self, Cs=DEFAULT_CS, cv=5, l1_ratio=0.1, class_weight="balanced", tol=1e-6, max_iter=5000, random_state=0
    ):
        self.Cs = Cs
        self.cv = cv
        self.l1_ratio = l1_ratio
        self.class_weight = class_weight
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _base(self, C):
        return ElasticNetLogisticRegression(
            C=C,
            l1_ratio=self.l1_ratio,
            class_weight=self.class_weight,
            tol=self.tol,
            max_iter=self.max_iter,
            warm_start=True,
        )

    def fit(self, X, y):
        X = _as_matrix(X)
        y = _binary_labels(y)
        Cs = sorted(float(c) for c in self.Cs)
        if not Cs:
            raise ValueError("Cs grid must be nonempty")
        n_minority = int(min(y.sum(), len(y) - y.sum()))
        n_splits = min(self.cv, n_minority)
        scores = np.zeros(len(Cs))
        self.convergence_warnings_ = 0
        if n_splits >= 2:
            folds = StratifiedKFold(n_splits=n_splits, shuffle=True, random_state=self.random_state)
            for train, test in folds.split(np.zeros(len(y)), y):
                model = self._base(Cs[0])
                for k, C in enumerate(Cs):
                    model.set_params(C=C)
                    with warnings.catch_warnings(record=True) as caught:
                        warnings.simplefilter("always", ConvergenceWarning)
                        model.fit(X[train], y[train])
                    self.convergence_warnings_ += len(caught)
                    scores[k] += _heldout_logloss(model, X[test], y[test]) / n_splits
            best = int(np.argmin(scores))
        else:
            best = len(Cs) // 2
        self.scores_ = scores
        self.C_ = Cs[best]
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ConvergenceWarning)
            self.estimator_ = self._base(self.C_).set_params(warm_start=False).fit(X, y)
        self.convergence_warnings_ += len(caught)
        self.classes_ = self.estimator_.classes_
        self.coef_ = self.estimator_.coef_
        self.intercept_ = self.estimator_.intercept_
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "estimator_")
        return self.estimator_.decision_function(X)

    def predict_proba(self, X):
        check_is_fitted(self, "estimator_")
        return self.estimator_.predict_proba(X)

    def predict(self, X):
        return self.estimator_.predict(X)


class _Binner:
    """Maps features to small integer bins; split candidates are bin boundaries."""

    def __init__(self, max_bins):
        self.max_bins = max_bins

    def fit(self, X):
        self.sparse_ = sp.issparse(X)
        if self.sparse_:
            # sparse inputs are treated as presence indicators: bin 0 = zero, bin 1 = nonzero
            self.n_bins_ = np.full(X.shape[1], 2)
            return self
        self.edges_ = []
        for j in range(X.shape[1]):
            col = X[:, j]
            uniq = np.unique(col)
            if len(uniq) <= self.max_bins:
                edges = (uniq[:-1] + uniq[1:]) / 2.0
            else:
                qs = np.quantile(col, np.linspace(0, 1, self.max_bins + 1)[1:-1], method="midpoint")
                edges = np.unique(qs)
            self.edges_.append(edges)
        self.n_bins_ = np.array([len(e) + 1 for e in self.edges_])
        return self

    def transform(self, X):
        if self.sparse_:
            X = sp.csr_matrix(X)
            return (X != 0).astype(np.uint8).toarray()
        out = np.empty(X.shape, dtype=np.uint8)
        for j, edges in enumerate(self.edges_):
            out[:, j] = np.searchsorted(edges, X[:, j], side="left")
        return out


class GradientBoostedTreesClassifier(ClassifierMixin, BaseEstimator):
    """Second-order gradient boosting of depth-limited regression trees on logistic loss.

    Features are binned once (``max_bins`` quantile bins for dense input;
    zero / nonzero for sparse input). Each tree is grown level by level
    with histogram split search, and leaves take the Newton step
    ``-sum(g) / (sum(h) + reg_lambda)``. Fitting is deterministic; ties in
    split gain go to the lowest feature index and bin.
    """

    def __init__(
        self,
        n_estimators=200,
        max_depth=6,
        learning_rate=0.1,
        reg_lambda=1.0,
        min_child_weight=1e-3,
        max_bins=32,
        random_state=0,
    ):
        self.n_estimators = n_estimators
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.reg_lambda = reg_lambda
        self.min_child_weight = min_child_weight
        self.max_bins = max_bins
        self.random_state = random_state

    def _histograms(self, rows, g, h):
        Xb, nb = self._Xb, self._max_nb
        if self._Xs is not None:
            sub = self._Xs[rows]
            g1 = sub.T @ g[rows]
            h1 = sub.T @ h[rows]
            G = np.column_stack([g[rows].sum() - g1, g1])
            H = np.column_stack([h[rows].sum() - h1, h1])
            return G, H
        p = Xb.shape[1]
        idx = (Xb[rows].astype(np.int64) + self._offsets).ravel()
        reps = np.repeat(rows, p)
        size = p * nb
        G = np.bincount(idx, weights=g[reps], minlength=size).reshape(p, nb)
        H = np.bincount(idx, weights=h[reps], minlength=size).reshape(p, nb)
        return G, H

    def _best_split(self, rows, g, h):
        G, H = self._histograms(rows, g, h)
        if G.shape[1] < 2:
            return None
        lam, mcw = self.reg_lambda, self.min_child_weight
        g_tot, h_tot = g[rows].sum(), h[rows].sum()
        GL = np.cumsum(G, axis=1)[:, :-1]
        HL = np.cumsum(H, axis=1)[:, :-1]
        GR = g_tot - GL
        HR = h_tot - HL
        gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - g_tot**2 / (h_tot + lam)
        invalid = (HL < mcw) | (HR < mcw)
        # bins beyond a feature's own bin count cannot separate rows
        invalid |= np.arange(GL.shape[1])[None, :] >= (self._binner.n_bins_ - 1)[:, None]
        gain = np.where(invalid, -np.inf, gain)
        k = int(np.argmax(gain))
        j, b = divmod(k, gain.shape[1])
        if not np.isfinite(gain[j, b]) or gain[j, b] <= 1e-12:
            return None
        return j, b

    def _grow(self, g, h):
        feature, threshold, left, right, value = [], [], [], [], []
        leaf_of_row = np.empty(len(g), dtype=np.int64)

        def new_node():
            for lst in (feature, threshold, left, right, value):
                lst.append(-1)
            return len(feature) - 1

        frontier = [(new_node(), np.arange(len(g)))]
        for depth in range(self.max_depth + 1):
            nxt = []
            for node, rows in frontier:
                split = None
                if depth < self.max_depth and len(rows) > 1:
                    split = self._best_split(rows, g, h)
                if split is None:
                    value[node] = -g[rows].sum() / (h[rows].sum() + self.reg_lambda)
                    leaf_of_row[rows] = node
                    continue
                j, b = split
                go_left = self._Xb[rows, j] <= b
                lnode, rnode = new_node(), new_node()
                feature[node], threshold[node], left[node], right[node] = j, b, lnode, rnode
                value[node] = 0.0
                nxt.append((lnode, rows[go_left]))
                nxt.append((rnode, rows[~go_left]))
            frontier = nxt
            if not frontier:
                break
        tree = {
            "feature": np.array(feature),
            "threshold": np.array(threshold),
            "left": np.array(left),
            "right": np.array(right),
            "value": np.array(value, dtype=float),
        }
        return tree, tree["value"][leaf_of_row]

    def fit(self, X, y):
        X = _as_matrix(X)
        y = _binary_labels(y)
        self.classes_ = np.array([0.0, 1.0])
        self.n_features_in_ = X.shape[1]
        self._binner = _Binner(self.max_bins).fit(X)
        self._Xb = self._binner.transform(X)
        self._Xs = sp.csr_matrix(self._Xb, dtype=float) if self._binner.sparse_ else None
        self._max_nb = int(self._binner.n_bins_.max()) if X.shape[1] else 1
        self._offsets = np.arange(X.shape[1], dtype=np.int64) * self._max_nb
        rate = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        self.init_score_ = float(np.log(rate / (1 - rate)))
        F = np.full(len(y), self.init_score_)
        self.trees_ = []
        for _ in range(self.n_estimators):
            p = expit(F)
            tree, step = self._grow(p - y, p * (1 - p))
            self.trees_.append(tree)
            F += self.learning_rate * step
        del self._Xb, self._Xs
        return self

    def decision_function(self, X):
        check_is_fitted(self, "trees_")
        Xb = self._binner.transform(_as_matrix(X))
        n = Xb.shape[0]
        F = np.full(n, self.init_score_)
        rows = np.arange(n)
        for tree in self.trees_:
            node = np.zeros(n, dtype=np.int64)
            while True:
                f = tree["feature"][node]
                active = f >= 0
                if not active.any():
                    break
                ra = rows[active]
                na = node[active]
                go_left = Xb[ra, f[active]] <= tree["threshold"][na]
                node[active] = np.where(go_left, tree["left"][na], tree["right"][na])
            F += self.learning_rate * tree["value"][node]
        return F

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(float)


LEARNER_FAMILIES = ("logistic_elasticnet", "gradient_boosted_trees")


@dataclass
class BaseLearnerSpec:
    """Hyperparameters of the nuisance learner family, recorded with every estimate."""

    family: str = "logistic_elasticnet"
    l1_ratio: float = 0.1
    Cs: tuple = DEFAULT_CS
    class_weight: str | None = "balanced"
    tol: float = 1e-6
    max_iter: int = 5000
    inner_cv: int = 5
    n_trees: int = 200
    depth: int = 6
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in LEARNER_FAMILIES:
            raise ConfigError(f"unknown learner family {self.family!r}; expected one of {LEARNER_FAMILIES}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ConfigError("l1_ratio must lie in [0, 1]")
        if not self.Cs:
            raise ConfigError("regularization grid must be nonempty")
        self.Cs = tuple(float(c) for c in self.Cs)

    def to_dict(self):
        d = asdict(self)
        d["Cs"] = list(self.Cs)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**dict(d or {}))


def make_learner(spec: BaseLearnerSpec, seed: int = 0):
    if spec.family == "logistic_elasticnet":
        return ElasticNetLogisticRegressionCV(
            Cs=spec.Cs,
            cv=spec.inner_cv,
            l1_ratio=spec.l1_ratio,
            class_weight=spec.class_weight,
            tol=spec.tol,
            max_iter=spec.max_iter,
            random_state=seed % (2**32),
        )
    return GradientBoostedTreesClassifier(
        n_estimators=spec.n_trees,
        max_depth=spec.depth,
        learning_rate=spec.learning_rate,
        reg_lambda=spec.reg_lambda,
        random_state=seed % (2**32),
    )


def fit_base_learner(spec: BaseLearnerSpec, features, labels, seed: int = 0):
    """Fit a fresh learner of ``spec``'s family; returns the fitted estimator."""
    return clone(make_learner(spec, seed)).fit(features, labels)
