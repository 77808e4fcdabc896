"""Dataset container, validation, summary statistics and seeded randomness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import DatasetError

#: The single pseudo-random bit generator used everywhere in the package.
RNG_ALGORITHM = "PCG64"


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator for an integer seed.

    A ``Generator`` is passed through unchanged so functions can accept
    either form, in the spirit of ``sklearn.utils.check_random_state``.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required; unseeded runs are not reproducible")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Independent generator for task ``key`` under ``master_seed``.

    Streams depend only on ``(master_seed, key)``, never on execution order,
    so seeds can be processed in any order or in parallel.
    """
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer seed from ``rng`` for a nested component."""
    return int(rng.integers(0, 2**63 - 1))


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Rows of covariates ``C``, optional binary proxies ``X``, treatment ``T`` and outcome ``Y``.

    Arrays are copied and frozen on construction, so instances can be shared
    between workers. ``meta`` carries auxiliary per-row columns that are not
    numeric covariates (document text, category labels).
    """

    covariates: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    covariate_names: tuple = ()
    proxies: sp.csr_matrix | None = None
    meta: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=float)
        n = len(np.asarray(self.treatment))
        if cov.size == 0:
            cov = np.empty((n, 0))
        elif cov.ndim == 1:
            cov = cov.reshape(-1, 1)
        names = tuple(self.covariate_names) or tuple(f"C{j + 1}" for j in range(cov.shape[1]))
        if len(names) != cov.shape[1]:
            raise DatasetError(f"{len(names)} covariate names for {cov.shape[1]} covariate columns")
        if len(set(names)) != len(names):
            raise DatasetError(f"duplicate covariate names in {names}")
        object.__setattr__(self, "covariates", _readonly(cov))
        object.__setattr__(self, "treatment", _readonly(np.asarray(self.treatment)))
        object.__setattr__(self, "outcome", _readonly(np.asarray(self.outcome, dtype=float)))
        object.__setattr__(self, "covariate_names", names)
        if self.proxies is not None:
            object.__setattr__(self, "proxies", sp.csr_matrix(self.proxies, copy=True))
        meta = {k: _readonly(np.asarray(v)) for k, v in dict(self.meta).items()}
        object.__setattr__(self, "meta", meta)

    @property
    def n_rows(self) -> int:
        return len(self.treatment)

    @property
    def column_names(self) -> tuple:
        return (*self.covariate_names, "T", "Y")

    def column(self, name: str) -> np.ndarray:
        """Covariate column by name; ``"T"`` and ``"Y"`` are also accepted."""
        if name == "T":
            return self.treatment
        if name == "Y":
            return self.outcome
        try:
            return self.covariates[:, self.covariate_names.index(name)]
        except ValueError:
            raise KeyError(f"no covariate named {name!r}; have {list(self.covariate_names)}") from None

    def take(self, rows) -> "TabularDataset":
        """New dataset with the given row indices (or boolean mask), in that order."""
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        rows = rows.astype(np.intp, copy=False)
        return TabularDataset(
            covariates=self.covariates[rows],
            treatment=self.treatment[rows],
            outcome=self.outcome[rows],
            covariate_names=self.covariate_names,
            proxies=None if self.proxies is None else self.proxies[rows],
            meta={k: v[rows] for k, v in self.meta.items()},
        )

    def replace(self, **changes) -> "TabularDataset":
        kw = dict(
            covariates=self.covariates,
            treatment=self.treatment,
            outcome=self.outcome,
            covariate_names=self.covariate_names,
            proxies=self.proxies,
            meta=self.meta,
        )
        kw.update(changes)
        return TabularDataset(**kw)


@dataclass(frozen=True)
class Violation:
    column: str
    row: int | None
    message: str

    def __str__(self):
        where = self.column if self.row is None else f"{self.column}[{self.row}]"
        return f"{where}: {self.message}"


def _first_bad(mask) -> int:
    return int(np.flatnonzero(mask)[0])


def validate(dataset: TabularDataset) -> list[Violation]:
    """List every invariant violation; an empty list means the dataset is well formed."""
    out: list[Violation] = []
    n = dataset.n_rows
    t = dataset.treatment
    for name, arr in (("covariates", dataset.covariates), ("Y", dataset.outcome)):
        if len(arr) != n:
            out.append(Violation(name, None, f"has {len(arr)} rows, expected {n}"))
    for name, arr in dataset.meta.items():
        if len(arr) != n:
            out.append(Violation(name, None, f"has {len(arr)} rows, expected {n}"))

    if t.dtype.kind in "fc":
        bad_t = ~np.isin(t, (0.0, 1.0)) | np.isnan(t)
    elif t.dtype.kind in "iub":
        bad_t = ~np.isin(t, (0, 1))
    else:
        bad_t = np.ones(n, dtype=bool)
    if bad_t.any():
        i = _first_bad(bad_t)
        out.append(Violation("T", i, f"treatment must be 0 or 1, got {t[i]!r} ({int(bad_t.sum())} bad rows)"))

    y = dataset.outcome
    if len(y) == n and np.isnan(y).any():
        out.append(Violation("Y", _first_bad(np.isnan(y)), "missing outcome"))
    if len(y) == n and np.isinf(y).any():
        out.append(Violation("Y", _first_bad(np.isinf(y)), "non-finite outcome"))

    cov = dataset.covariates
    if cov.shape[0] == n:
        for j, name in enumerate(dataset.covariate_names):
            col = cov[:, j]
            if np.isnan(col).any():
                out.append(Violation(name, _first_bad(np.isnan(col)), "missing covariate value"))
            elif np.isinf(col).any():
                out.append(Violation(name, _first_bad(np.isinf(col)), "non-finite covariate value"))

    X = dataset.proxies
    if X is not None:
        if X.shape[0] != n:
            out.append(Violation("X", None, f"proxy matrix has {X.shape[0]} rows, expected {n}"))
        nz = X.data
        if nz.size and not np.isin(nz, (0, 1)).all():
            coo = X.tocoo()
            k = _first_bad(~np.isin(coo.data, (0, 1)))
            out.append(Violation("X", int(coo.row[k]), f"proxy entries must be 0/1, got {coo.data[k]!r}"))
    return out


def check_dataset(dataset: TabularDataset, *, both_arms: bool = False) -> TabularDataset:
    """Raise :class:`DatasetError` if ``dataset`` has violations; return it otherwise."""
    problems = validate(dataset)
    if problems:
        shown = "; ".join(str(p) for p in problems[:5])
        raise DatasetError(f"invalid dataset ({len(problems)} violations): {shown}")
    if both_arms:
        n1 = int(np.sum(dataset.treatment == 1))
        if n1 == 0 or n1 == dataset.n_rows:
            raise DatasetError("both treatment arms must be non-empty")
    return dataset


@dataclass(frozen=True)
class SummaryStats:
    n_rows: int
    treated_fraction: float
    mean_outcome_by_arm: tuple  # (control, treated); NaN marks an empty arm
    covariate_means: dict
    empty_arms: tuple = ()


def summary(dataset: TabularDataset) -> SummaryStats:
    t = np.asarray(dataset.treatment)
    y = dataset.outcome
    n1 = int(np.sum(t == 1))
    means, empty = [], []
    for arm in (0, 1):
        sel = t == arm
        if sel.any():
            means.append(float(np.mean(y[sel])))
        else:
            means.append(float("nan"))
            empty.append(arm)
    return SummaryStats(
        n_rows=dataset.n_rows,
        treated_fraction=n1 / dataset.n_rows if dataset.n_rows else float("nan"),
        mean_outcome_by_arm=tuple(means),
        covariate_means={
            name: float(np.mean(dataset.covariates[:, j])) for j, name in enumerate(dataset.covariate_names)
        },
        empty_arms=tuple(empty),
    )


def is_binary(values) -> bool:
    v = np.asarray(values)
    return v.size > 0 and bool(np.isin(v, (0, 1)).all())


def as_dataset(covariates, treatment, outcome, names: Sequence[str] | None = None, **kw) -> TabularDataset:
    """Build and validate a dataset from plain arrays."""
    return check_dataset(TabularDataset(covariates, treatment, outcome, tuple(names or ()), **kw))
