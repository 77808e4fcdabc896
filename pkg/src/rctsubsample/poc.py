"""Proxy-text pipeline: a binary category drives the sampler, bag-of-words text feeds the estimators.

The released scholarly-article RCT is not bundled. :func:`synthetic_text_rct`
builds a stand-in with the same structure (category labels, document text,
binary treatment and outcome) and a known treatment effect.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import TabularDataset, make_rng, substream
from .diagnostics import RECOVERABLE
from .estimators.ate import NUISANCE_ESTIMATORS, diff_in_means, exact_backdoor_binary, parametric_backdoor
from .estimators.crossfit import crossfit_nuisances, nuisance_average_precision
from .estimators.learners import BaseLearnerSpec
from .exceptions import DatasetError
from .sampling import PiecewiseBinary, rct_rejection_sample
from .text import build_vocabulary, featurize

# Published descriptive statistics of the real RCT and two subpopulations.
PUBLISHED = {
    "full": {"n": 69_675, "ate": 0.113},
    "A": {"categories": ("Physics", "Medicine"), "n": 4_379, "ate": 0.096, "odds_ratio": 1.8},
    "B": {"categories": ("Engineering", "Business"), "n": 2_238, "ate": 0.075, "odds_ratio": 1.4},
}

# (C, Y) contingency counts consistent with the published n and odds ratio of
# each subpopulation: {c: (documents, documents with Y=1)}. Only n and the
# rounded odds ratio are published; the split is one table matching both.
SUBPOPULATION_CY_TABLES = {
    "A": {0: (788, 34), 1: (3591, 270)},
    "B": {0: (1231, 49), 1: (1007, 56)},
}


def cy_fixture(name: str) -> TabularDataset:
    """Rows reproducing a subpopulation's (C, Y) table; ``T`` alternates and carries no signal."""
    table = SUBPOPULATION_CY_TABLES[name]
    c, y = [], []
    for cv, (docs, pos) in sorted(table.items()):
        c += [cv] * docs
        y += [1.0] * pos + [0.0] * (docs - pos)
    n = len(c)
    return TabularDataset(np.asarray(c, dtype=float), np.arange(n) % 2, np.asarray(y), ("C",))


def subpopulation_filter(
    d: TabularDataset, category_column: str, categories, covariate: str = "C"
) -> TabularDataset:
    """Rows in either of two categories, with a binary covariate marking which.

    ``categories[0]`` maps to 0 and ``categories[1]`` to 1. The label of each
    row stays in ``meta[category_column]``.
    """
    if len(categories) != 2 or categories[0] == categories[1]:
        raise ValueError("need exactly two distinct categories")
    if covariate in d.covariate_names:
        raise DatasetError(f"dataset already has a covariate named {covariate!r}")
    try:
        labels = np.asarray(d.meta[category_column]).astype(str)
    except KeyError:
        raise DatasetError(f"no category column {category_column!r}; have {sorted(d.meta)}") from None
    masks = [labels == str(c) for c in categories]
    for cat, m in zip(categories, masks):
        if not m.any():
            raise DatasetError(f"category {cat!r} has no rows in {category_column!r}")
    rows = np.flatnonzero(masks[0] | masks[1])
    sub = d.take(rows)
    c = masks[1][rows].astype(float)
    return sub.replace(
        covariates=np.column_stack([sub.covariates, c]),
        covariate_names=(*sub.covariate_names, covariate),
    )


def _pseudo_words(prefix: str, count: int) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    out = []
    for j in range(count):
        s, k = "", j
        for _ in range(3):
            s = letters[k % 26] + s
            k //= 26
        out.append(prefix + s)
    return out


def synthetic_text_rct(
    n: int = 4000,
    rng=0,
    *,
    categories=("Physics", "Medicine"),
    p_category1: float = 0.5,
    p_treated: float = 0.5,
    base_rate: float = 0.1,
    category_effect: float = 0.15,
    ate: float = 0.1,
    field_words: int = 150,
    shared_words: int = 400,
    words_per_doc: tuple = (12, 12),
) -> TabularDataset:
    """A randomized trial of documents whose text reveals a binary field.

    Each document takes ``words_per_doc[0]`` words from its field's list
    and ``words_per_doc[1]`` from a shared list, so the field is nearly
    recoverable from the bag of words. ``Y ~ Bernoulli(base_rate +
    category_effect * C + ate * T)``; the effect is the same in both fields,
    so the true ATE is ``ate`` exactly. No covariate columns are stored:
    category and text live in ``meta``.
    """
    rng = make_rng(rng)
    c = rng.binomial(1, p_category1, n)
    t = rng.binomial(1, p_treated, n)
    p = base_rate + category_effect * c + ate * t
    if p.min() < 0 or p.max() > 1:
        raise ValueError("outcome probabilities leave [0, 1]")
    y = (rng.random(n) < p).astype(float)
    vocab = [_pseudo_words("qf", field_words), _pseudo_words("qg", field_words)]
    shared = _pseudo_words("qs", shared_words)
    k_field, k_shared = words_per_doc
    docs = []
    for i in range(n):
        own = rng.choice(field_words, k_field, replace=False)
        common = rng.choice(shared_words, k_shared, replace=False)
        words = [vocab[c[i]][j] for j in own] + [shared[j] for j in common]
        docs.append(" ".join(words))
    labels = np.asarray(categories, dtype=object)[c]
    return TabularDataset(np.empty((n, 0)), t, y, (), meta={"text": np.asarray(docs, dtype=object), "category": labels})


@dataclass
class PocConfig:
    """Settings of the proxy-text pipeline; defaults follow the published setup."""

    zeta0: float = 0.85
    zeta1: float = 0.15
    covariate: str = "C"
    text_column: str = "text"
    n_seeds: int = 100
    k_folds: int = 5
    learners: dict = field(
        default_factory=lambda: {
            "linear": BaseLearnerSpec("logistic_elasticnet"),
            "nonlinear": BaseLearnerSpec("gradient_boosted_trees"),
        }
    )
    min_df: int = 5
    max_df: float = 0.10
    max_features: int = 2000
    eps: float = 0.01


@dataclass
class PocResult:
    gold_ate: float
    vocabulary_size: int
    records: list  # dicts, one per (seed, learner, estimator)
    failures: dict = field(default_factory=dict)

    def summary(self) -> dict:
        """Mean and std of relative absolute error per (learner, estimator)."""
        out = {}
        for r in self.records:
            out.setdefault((r["learner"], r["estimator"]), []).append(r["rel_abs_error"])
        return {k: (float(np.mean(v)), float(np.std(v))) for k, v in out.items()}


def featurize_rct(rct: TabularDataset, cfg: PocConfig | None = None) -> TabularDataset:
    """Attach the bag-of-words matrix; the vocabulary comes from this dataset's text."""
    cfg = cfg or PocConfig()
    corpus = list(rct.meta[cfg.text_column])
    vocab = build_vocabulary(corpus, min_df=cfg.min_df, max_df=cfg.max_df, max_features=cfg.max_features)
    return rct.replace(proxies=featurize(corpus, vocab))


def run_poc(rct: TabularDataset, cfg: PocConfig | None = None, master_seed: int = 0) -> PocResult:
    """Sample, fit cross-fitted nuisances on text only, and score each estimator.

    ``rct`` needs the binary covariate ``cfg.covariate`` and a proxy matrix
    (see :func:`featurize_rct`). Errors are relative to the RCT difference
    in means. Learner ``"oracle"`` holds two backdoor estimates on ``C``:
    exact cell means and a linear fit with the ``T * C`` interaction.
    """
    cfg = cfg or PocConfig()
    if rct.proxies is None:
        raise DatasetError("run_poc needs proxies; call featurize_rct first")
    gold = diff_in_means(rct).point_estimate
    cov = cfg.covariate
    f = PiecewiseBinary(cfg.covariate, cfg.zeta0, cfg.zeta1)
    records, failures = [], {}

    def add(seed, learner, name, value, extra=None):
        row = {
            "seed": seed,
            "learner": learner,
            "estimator": name,
            "estimate": float(value),
            "rel_abs_error": abs(float(value) - gold) / abs(gold),
        }
        row.update(extra or {})
        records.append(row)

    for s in range(cfg.n_seeds):
        try:
            obs = rct_rejection_sample(rct, f, substream(master_seed, 21, s)).output
            add(s, "oracle", "backdoor_exact", exact_backdoor_binary(obs, cfg.covariate).point_estimate)
            add(s, "oracle", "backdoor_param", parametric_backdoor(obs, ((cov,), ("T", cov))).point_estimate)
            add(s, "none", "dim", diff_in_means(obs).point_estimate)
            for li, (lname, spec) in enumerate(sorted(cfg.learners.items())):
                nuis = crossfit_nuisances(
                    obs, spec, cfg.k_folds, substream(master_seed, 22, li, s), features="proxies", eps=cfg.eps
                )
                ap = {f"ap_{k}": v for k, v in nuisance_average_precision(obs, nuis).items()}
                for name, fn in NUISANCE_ESTIMATORS.items():
                    add(s, lname, name, fn(obs, nuis).point_estimate, ap)
        except RECOVERABLE as exc:
            failures[s] = f"{type(exc).__name__}: {exc}"
    return PocResult(gold, rct.proxies.shape[1], records, failures)
