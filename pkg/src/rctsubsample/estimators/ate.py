"""Average treatment effect estimators.

Functions take a :class:`~rctsubsample.data.TabularDataset` and return an
:class:`EstimateRecord`. The estimator classes at the bottom wrap them in the
scikit-learn ``fit`` convention and add ``weighted_batch``: the estimate
under a matrix of per-row multiplicities. A bootstrap resample equals the
original data weighted by how often each row was drawn, so this evaluates
many resamples at once without copying rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ..data import TabularDataset, is_binary
from ..exceptions import EstimationError

ESTIMATOR_NAMES = ("dim", "backdoor_exact", "backdoor_param", "q", "iptw", "aiptw", "dml")


@dataclass
class EstimateRecord:
    estimator_name: str
    point_estimate: float
    n_used: int
    bootstrap_ci: tuple | None = None
    provenance: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.point_estimate)


def _arms(d: TabularDataset):
    t = np.asarray(d.treatment)
    treated = t == 1
    if treated.all() or not treated.any():
        raise EstimationError("both treatment arms must be non-empty")
    return t, treated


def diff_in_means(d: TabularDataset) -> EstimateRecord:
    """``mean(Y | T=1) - mean(Y | T=0)``."""
    _, treated = _arms(d)
    y = d.outcome
    est = float(np.mean(y[treated]) - np.mean(y[~treated]))
    return EstimateRecord("dim", est, d.n_rows)


def exact_backdoor_binary(d: TabularDataset, covariate: str) -> EstimateRecord:
    """``sum_c P_hat(c) (E_hat[Y|T=1,c] - E_hat[Y|T=0,c])`` from contingency counts.

    Treatment, outcome and the adjustment covariate must all be binary and
    every ``(t, c)`` cell must be populated.
    """
    c = d.column(covariate)
    t = np.asarray(d.treatment)
    y = d.outcome
    for name, v in (("T", t), ("Y", y), (covariate, c)):
        if not is_binary(v):
            raise EstimationError(f"exact backdoor needs binary {name}")
    n = len(t)
    est = 0.0
    for cv in (0, 1):
        in_c = c == cv
        diff = []
        for tv in (1, 0):
            cell = in_c & (t == tv)
            if not cell.any():
                raise EstimationError(f"empty cell T={tv}, {covariate}={cv}: overlap violated")
            diff.append(np.mean(y[cell]))
        est += in_c.sum() / n * (diff[0] - diff[1])
    return EstimateRecord("backdoor_exact", float(est), n, provenance={"adjustment": covariate})


def design_matrix(d: TabularDataset, terms: Sequence[Sequence[str]], treatment=None) -> np.ndarray:
    """Intercept, ``T`` and one column per product term.

    ``treatment`` overrides the observed ``T`` (a scalar gives the design
    under ``do(T=t)``).
    """
    n = d.n_rows
    t = np.asarray(d.treatment, dtype=float) if treatment is None else np.broadcast_to(float(treatment), (n,))
    cols = [np.ones(n), t]
    for term in terms:
        col = np.ones(n)
        for v in term:
            col = col * (t if v == "T" else d.column(v))
        cols.append(col)
    return np.column_stack(cols)


def _terms_label(terms):
    return ["*".join(t) for t in terms]


def parametric_backdoor(d: TabularDataset, terms, sample_weight=None) -> EstimateRecord:
    """Plug-in ATE from least squares ``Y ~ 1 + T + terms``.

    The estimate is the average over rows of the fitted contrast
    ``x(1, c_i) - x(0, c_i)``, i.e. predictions under ``do(T=1)`` minus
    ``do(T=0)`` averaged over the empirical covariate distribution.
    """
    terms = tuple(tuple(t) for t in terms)
    try:
        X = design_matrix(d, terms)
    except KeyError as exc:
        raise EstimationError(str(exc)) from None
    y = d.outcome
    w = np.ones(d.n_rows) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    keep = w > 0
    Xk = X[keep]
    if np.linalg.matrix_rank(Xk) < X.shape[1]:
        raise EstimationError(f"design matrix for terms {_terms_label(terms)} is rank deficient")
    sw = np.sqrt(w[keep])
    beta, *_ = np.linalg.lstsq(Xk * sw[:, None], y[keep] * sw, rcond=None)
    contrast = design_matrix(d, terms, 1.0) - design_matrix(d, terms, 0.0)
    est = float(np.average(contrast, axis=0, weights=w) @ beta)
    return EstimateRecord(
        "backdoor_param", est, int(keep.sum()), provenance={"terms": _terms_label(terms), "coef": beta.tolist()}
    )


def _batched_solve(A, b):
    """Solve each ``A[k] x = b[k]``; ill-conditioned systems give NaN rows."""
    out = np.full(b.shape, np.nan)
    cond = np.linalg.cond(A)
    ok = np.isfinite(cond) & (cond < 1e12)
    if ok.any():
        out[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    return out


def parametric_backdoor_batch(d: TabularDataset, terms, weights) -> np.ndarray:
    """:func:`parametric_backdoor` under each row of the ``(B, n)`` weight matrix.

    Uses the weighted normal equations; entries are NaN where the weighted
    design is singular.
    """
    terms = tuple(tuple(t) for t in terms)
    X = design_matrix(d, terms)
    y = d.outcome
    D = design_matrix(d, terms, 1.0) - design_matrix(d, terms, 0.0)
    p = X.shape[1]
    iu = np.triu_indices(p)
    Z = np.hstack([X[:, iu[0]] * X[:, iu[1]], X * y[:, None], D])
    W = np.asarray(weights, dtype=float)
    G = W @ Z
    npair = len(iu[0])
    A = np.empty((W.shape[0], p, p))
    A[:, iu[0], iu[1]] = G[:, :npair]
    A[:, iu[1], iu[0]] = G[:, :npair]
    b = G[:, npair : npair + p]
    dbar = G[:, npair + p :] / W.sum(axis=1, keepdims=True)
    beta = _batched_solve(A, b)
    return np.einsum("bp,bp->b", dbar, beta)


def _cell_sums(d, covariate, W):
    """Per-resample weighted counts and outcome sums in each ``(t, c)`` cell."""
    t = np.asarray(d.treatment)
    c = np.ones(d.n_rows) if covariate is None else d.column(covariate)
    y = d.outcome
    cols = []
    for cv in (0, 1):
        for tv in (0, 1):
            ind = ((t == tv) & (c == cv)).astype(float)
            cols += [ind, ind * y]
    G = np.asarray(W, dtype=float) @ np.column_stack(cols)
    return G[:, 0::2].reshape(-1, 2, 2), G[:, 1::2].reshape(-1, 2, 2)  # [b, c, t]


def _means_or_nan(sums, counts):
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.where(counts > 0, counts, 1), np.nan)


@dataclass
class NuisanceEstimates:
    """Per-row nuisance predictions used by the cross-fitted estimators."""

    q0: np.ndarray
    q1: np.ndarray
    g: np.ndarray
    qx: np.ndarray
    fold_id: np.ndarray | None = None
    eps: float = 0.01
    provenance: dict = field(default_factory=dict)


def _check_nuisances(d, nuis):
    n = d.n_rows
    for name in ("q0", "q1", "g", "qx"):
        if len(getattr(nuis, name)) != n:
            raise EstimationError(f"nuisance {name} has {len(getattr(nuis, name))} rows, dataset has {n}")
    g = np.asarray(nuis.g, dtype=float)
    lo, hi = nuis.eps, 1.0 - nuis.eps
    if np.any(g < lo - 1e-15) or np.any(g > hi + 1e-15) or np.any((g <= 0) | (g >= 1)):
        raise EstimationError(f"propensity scores must be clipped into [{lo}, {hi}] before weighting")
    return np.asarray(d.treatment, dtype=float), d.outcome, g


def _record(name, value, d, nuis):
    prov = dict(nuis.provenance)
    prov["clip_eps"] = nuis.eps
    return EstimateRecord(name, float(value), d.n_rows, provenance=prov)


def tau_q(d: TabularDataset, nuis: NuisanceEstimates) -> EstimateRecord:
    """Outcome-regression plug-in ``mean(q1 - q0)``."""
    _check_nuisances(d, nuis)
    return _record("q", np.mean(np.asarray(nuis.q1) - np.asarray(nuis.q0)), d, nuis)


def tau_iptw(d: TabularDataset, nuis: NuisanceEstimates) -> EstimateRecord:
    """``mean(y t / g - y (1 - t) / (1 - g))``."""
    t, y, g = _check_nuisances(d, nuis)
    return _record("iptw", np.mean(y * t / g - y * (1 - t) / (1 - g)), d, nuis)


def aiptw_scores(d: TabularDataset, nuis: NuisanceEstimates) -> np.ndarray:
    """Per-row doubly robust scores whose mean is the AIPTW estimate."""
    t, y, g = _check_nuisances(d, nuis)
    q0 = np.asarray(nuis.q0, dtype=float)
    q1 = np.asarray(nuis.q1, dtype=float)
    return q1 - q0 + t * (y - q1) / g - (1 - t) * (y - q0) / (1 - g)


def tau_aiptw(d: TabularDataset, nuis: NuisanceEstimates) -> EstimateRecord:
    return _record("aiptw", np.mean(aiptw_scores(d, nuis)), d, nuis)


def tau_dml(d: TabularDataset, nuis: NuisanceEstimates) -> EstimateRecord:
    """No-intercept least squares of ``y - qx`` on ``t - g``."""
    t, y, g = _check_nuisances(d, nuis)
    rt = t - g
    ry = y - np.asarray(nuis.qx, dtype=float)
    denom = float(rt @ rt)
    if denom <= 0.0:
        raise EstimationError("treatment residuals have zero variance")
    return _record("dml", rt @ ry / denom, d, nuis)


NUISANCE_ESTIMATORS = {"q": tau_q, "iptw": tau_iptw, "aiptw": tau_aiptw, "dml": tau_dml}


class _AteEstimator(BaseEstimator):
    """Shared ``fit``/``__call__`` plumbing; subclasses implement ``_estimate``."""

    def fit(self, d: TabularDataset, y=None):
        self.estimate_ = self._estimate(d)
        self.ate_ = self.estimate_.point_estimate
        return self

    def __call__(self, d: TabularDataset) -> float:
        return self._estimate(d).point_estimate


class DifferenceInMeans(_AteEstimator):
    name = "dim"

    def _estimate(self, d):
        return diff_in_means(d)

    def weighted_batch(self, d, W):
        counts, sums = _cell_sums(d, None, W)
        m = _means_or_nan(sums.sum(axis=1), counts.sum(axis=1))
        return m[:, 1] - m[:, 0]


class ExactBackdoor(_AteEstimator):
    name = "backdoor_exact"

    def __init__(self, covariate="C"):
        self.covariate = covariate

    def _estimate(self, d):
        return exact_backdoor_binary(d, self.covariate)

    def weighted_batch(self, d, W):
        counts, sums = _cell_sums(d, self.covariate, W)
        m = _means_or_nan(sums, counts)
        share = counts.sum(axis=2) / counts.sum(axis=(1, 2))[:, None]
        return np.sum(share * (m[:, :, 1] - m[:, :, 0]), axis=1)


class ParametricBackdoor(_AteEstimator):
    name = "backdoor_param"

    def __init__(self, terms=(("C",), ("T", "C"))):
        self.terms = terms

    def _estimate(self, d):
        return parametric_backdoor(d, self.terms)

    def weighted_batch(self, d, W):
        return parametric_backdoor_batch(d, self.terms, W)
