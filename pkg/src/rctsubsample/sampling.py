"""Subsampling RCT data into confounded observational data.

Two samplers share one :class:`ConfoundingFunction` describing the designer's
target ``P*(T=1 | C)``:

* :func:`rct_rejection_sample` keeps row ``i`` with probability
  ``P*(T=t_i | C_i) / (P_hat(T=t_i) * M)``. The retained rows follow
  ``P(C) P*(T|C) P(Y|T,C)``, so the covariate marginal and the outcome
  mechanism of the trial are preserved and the ATE stays identified by
  backdoor adjustment on ``C``.
* :func:`gentzel_sample` keeps row ``i`` when a ``Bernoulli(f(C_i))`` draw
  equals ``t_i``. Selection then depends on ``(T, C)`` without correcting the
  covariate marginal, which biases adjusted estimates whenever
  ``P(T=1) != 0.5``. It is kept as the baseline to compare against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .data import TabularDataset, check_dataset, make_rng
from .exceptions import ConfigError, DatasetError, PositivityError, SamplingError

# numerical slack when checking that acceptance probabilities stay <= 1
_ACCEPT_SLACK = 1e-12


class ConfoundingFunction:
    """Designer-specified ``P*(T=1 | C)``."""

    kind: str = ""

    @property
    def variables(self) -> tuple:
        raise NotImplementedError

    @property
    def is_trivial(self) -> bool:
        """True when the function does not depend on ``C``."""
        raise NotImplementedError

    def _raw(self, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        raise NotImplementedError

    def prob_treated(self, data) -> np.ndarray:
        """Vector of ``P*(T=1 | C_i)``; ``data`` is a dataset or a name -> column mapping."""
        if isinstance(data, TabularDataset):
            try:
                cols = {v: data.column(v) for v in self.variables}
            except KeyError as exc:
                raise DatasetError(str(exc)) from None
            n = data.n_rows
        else:
            missing = [v for v in self.variables if v not in data]
            if missing:
                raise DatasetError(f"covariates {missing} required by the confounding function are missing")
            cols = {v: np.asarray(data[v], dtype=float) for v in self.variables}
            n = len(next(iter(data.values()))) if len(data) else 1
        p = np.broadcast_to(np.asarray(self._raw(cols, n), dtype=float), (n,))
        bad = ~((p > 0.0) & (p < 1.0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise PositivityError(f"P*(T=1|C) = {p.flat[i]!r} at row {i} is outside (0, 1)")
        return p

    def prob_of_observed(self, data: TabularDataset) -> np.ndarray:
        """``P*(T = t_i | C_i)`` for every row's observed treatment."""
        p1 = self.prob_treated(data)
        return np.where(np.asarray(data.treatment) == 1, p1, 1.0 - p1)

    def to_config(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_config(cfg: Mapping) -> "ConfoundingFunction":
        kind = cfg.get("kind")
        if kind == "piecewise":
            return PiecewiseBinary(cfg["covariate"], float(cfg["zeta0"]), float(cfg["zeta1"]))
        if kind == "logistic":
            terms = tuple((tuple(t["vars"]), float(t["coef"])) for t in cfg.get("terms", ()))
            return Logistic(float(cfg.get("intercept", 0.0)), terms)
        raise ConfigError(f"unknown confounding function kind {kind!r}; expected 'piecewise' or 'logistic'")


@dataclass(frozen=True)
class PiecewiseBinary(ConfoundingFunction):
    """``zeta0`` when the binary covariate is 0, ``zeta1`` when it is 1."""

    covariate: str
    zeta0: float
    zeta1: float
    kind = "piecewise"

    def __post_init__(self):
        for name in ("zeta0", "zeta1"):
            z = getattr(self, name)
            if not 0.0 < z < 1.0:
                raise PositivityError(f"{name} = {z} must lie strictly between 0 and 1")

    @property
    def variables(self):
        return (self.covariate,)

    @property
    def is_trivial(self):
        return self.zeta0 == self.zeta1

    def _raw(self, columns, n):
        c = columns[self.covariate]
        if not np.isin(c, (0, 1)).all():
            raise DatasetError(f"covariate {self.covariate!r} must be binary for a piecewise confounding function")
        return np.where(c == 1, self.zeta1, self.zeta0)

    def to_config(self):
        return {"kind": "piecewise", "covariate": self.covariate, "zeta0": self.zeta0, "zeta1": self.zeta1}


@dataclass(frozen=True)
class Logistic(ConfoundingFunction):
    """``expit(intercept + sum_k coef_k * prod(vars_k))``.

    ``terms`` is a sequence of ``(variable names, coefficient)``; a term with
    several names is their product, e.g. ``(("C1", "C2"), 0.5)``.
    """

    intercept: float = 0.0
    terms: tuple = ()
    kind = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((tuple(v), float(c)) for v, c in self.terms))

    @property
    def variables(self):
        seen = []
        for names, _ in self.terms:
            for v in names:
                if v not in seen:
                    seen.append(v)
        return tuple(seen)

    @property
    def is_trivial(self):
        return all(c == 0.0 for _, c in self.terms)

    def linear_predictor(self, columns, n) -> np.ndarray:
        eta = np.full(n, self.intercept)
        for names, coef in self.terms:
            prod = np.ones(n)
            for v in names:
                prod = prod * columns[v]
            eta = eta + coef * prod
        return eta

    def _raw(self, columns, n):
        return expit(self.linear_predictor(columns, n))

    def to_config(self):
        return {
            "kind": "logistic",
            "intercept": self.intercept,
            "terms": [{"vars": list(v), "coef": c} for v, c in self.terms],
        }


def evaluate_pstar(f: ConfoundingFunction, covariate_row: Mapping[str, float]) -> float:
    """``P*(T=1 | C=c)`` for a single covariate row given as a name -> value mapping."""
    cols = {}
    for v in f.variables:
        if v not in covariate_row:
            raise DatasetError(f"covariate {v!r} required by the confounding function is missing")
        cols[v] = np.array([float(covariate_row[v])])
    return float(f.prob_treated(cols)[0])


def arm_fractions(rct: TabularDataset) -> tuple[float, float]:
    """Empirical ``(P_hat(T=0), P_hat(T=1))``."""
    t = np.asarray(rct.treatment)
    p1 = float(np.mean(t == 1))
    return 1.0 - p1, p1


def estimate_m_bound(rct: TabularDataset, f: ConfoundingFunction) -> float:
    """``max_i P*(T=t_i|C_i) / min_i P_hat(T=t_i)`` over the rows of ``rct``.

    Always at least the largest observed likelihood ratio, so every
    acceptance probability computed with it is at most one.
    """
    check_dataset(rct)
    p0, p1 = arm_fractions(rct)
    if p0 == 0.0 or p1 == 0.0:
        raise DatasetError("cannot bound the likelihood ratio: one treatment arm is empty")
    return float(np.max(f.prob_of_observed(rct)) / min(p0, p1))


@dataclass
class SamplerReport:
    """Output of a sampler together with its audit trail."""

    output: TabularDataset
    n_in: int
    n_out: int
    m_bound: float | None
    acceptance_rate: float
    acceptance_probs: np.ndarray
    kept: np.ndarray  # row indices of the input that were retained
    sampler: str = ""
    extra: dict = field(default_factory=dict)


def acceptance_probabilities(rct: TabularDataset, f: ConfoundingFunction, m_bound: float | None = None):
    """Per-row rejection-sampler acceptance probabilities and the bound used."""
    p0, p1 = arm_fractions(rct)
    if p0 == 0.0 or p1 == 0.0:
        raise DatasetError("rejection sampling needs both treatment arms in the RCT")
    m = estimate_m_bound(rct, f) if m_bound is None else float(m_bound)
    t = np.asarray(rct.treatment)
    p_hat = np.where(t == 1, p1, p0)
    accept = f.prob_of_observed(rct) / (p_hat * m)
    if np.any(accept > 1.0 + _ACCEPT_SLACK):
        raise SamplingError(
            f"M = {m:.6g} is below the likelihood ratio bound; max acceptance {accept.max():.6g} > 1"
        )
    return np.minimum(accept, 1.0), m


def rct_rejection_sample(
    rct: TabularDataset, f: ConfoundingFunction, rng, *, m_bound: float | None = None
) -> SamplerReport:
    """Confounded subsample of ``rct`` with target ``P(C) P*(T|C) P(Y|T,C)``.

    One uniform is drawn per row, in row order; row ``i`` is retained when
    ``U_i <= P*(T=t_i|C_i) / (P_hat(T=t_i) M)``. ``P_hat`` is the arm share in
    the full input, fixed before any draws. ``M`` defaults to
    :func:`estimate_m_bound`.
    """
    check_dataset(rct, both_arms=True)
    rng = make_rng(rng)
    accept, m = acceptance_probabilities(rct, f, m_bound)
    u = rng.random(rct.n_rows)
    keep = u <= accept
    return _report(rct, keep, accept, m, "rejection")


def gentzel_sample(rct: TabularDataset, f: ConfoundingFunction, rng) -> SamplerReport:
    """Baseline selection sampler: keep row ``i`` iff ``Bernoulli(f(C_i)) == t_i``."""
    check_dataset(rct, both_arms=True)
    rng = make_rng(rng)
    p1 = f.prob_treated(rct)
    draw = (rng.random(rct.n_rows) < p1).astype(int)
    keep = draw == np.asarray(rct.treatment)
    accept = f.prob_of_observed(rct)
    return _report(rct, keep, accept, None, "gentzel")


def _report(rct, keep, accept, m, name):
    n_out = int(keep.sum())
    if n_out == 0:
        raise SamplingError(
            f"{name} sampler discarded all {rct.n_rows} rows "
            f"(mean acceptance probability {float(np.mean(accept)):.3g})"
        )
    kept = np.flatnonzero(keep)
    return SamplerReport(
        output=rct.take(kept),
        n_in=rct.n_rows,
        n_out=n_out,
        m_bound=m,
        acceptance_rate=n_out / rct.n_rows,
        acceptance_probs=accept[kept],
        kept=kept,
        sampler=name,
    )


SAMPLERS = {"rejection": rct_rejection_sample, "gentzel": gentzel_sample}


class RCTRejectionSampler(BaseEstimator):
    """Estimator-style wrapper around :func:`rct_rejection_sample`.

    ``fit`` freezes the arm fractions and the bound ``M`` on an RCT;
    ``fit_resample`` then returns the confounded subsample.

    Parameters
    ----------
    confounding : ConfoundingFunction
        Target ``P*(T=1 | C)``.
    m_bound : float or None
        Fixed likelihood-ratio bound. Estimated from the data when None.
    random_state : int or numpy Generator
    """

    def __init__(self, confounding=None, m_bound=None, random_state=0):
        self.confounding = confounding
        self.m_bound = m_bound
        self.random_state = random_state

    def fit(self, rct: TabularDataset, y=None):
        check_dataset(rct, both_arms=True)
        self.arm_fractions_ = arm_fractions(rct)
        self.m_bound_ = estimate_m_bound(rct, self.confounding) if self.m_bound is None else float(self.m_bound)
        return self

    def fit_resample(self, rct: TabularDataset, y=None) -> TabularDataset:
        self.fit(rct)
        self.report_ = rct_rejection_sample(rct, self.confounding, self.random_state, m_bound=self.m_bound_)
        return self.report_.output


class GentzelSampler(BaseEstimator):
    """Estimator-style wrapper around :func:`gentzel_sample`."""

    def __init__(self, confounding=None, random_state=0):
        self.confounding = confounding
        self.random_state = random_state

    def fit(self, rct: TabularDataset, y=None):
        check_dataset(rct, both_arms=True)
        return self

    def fit_resample(self, rct: TabularDataset, y=None) -> TabularDataset:
        self.report_ = gentzel_sample(rct, self.confounding, self.random_state)
        return self.report_.output


def sampler_by_name(name: str):
    try:
        return SAMPLERS[name]
    except KeyError:
        raise ConfigError(f"unknown sampler {name!r}; expected one of {sorted(SAMPLERS)} or 'none'") from None


def piecewise_grid(covariate: str, zetas: Sequence[tuple]) -> list[PiecewiseBinary]:
    return [PiecewiseBinary(covariate, z0, z1) for z0, z1 in zetas]
