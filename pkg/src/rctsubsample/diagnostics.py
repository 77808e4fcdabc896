"""Pre-sampling checks, the confounding diagnostic, percentile bootstrap and coverage."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import TabularDataset, is_binary, make_rng, substream
from .dgp import DgpSetting, generate, get_setting, strength_confounding_function
from .estimators.ate import ExactBackdoor, ParametricBackdoor, diff_in_means
from .exceptions import ConfigError, EstimationError, PositivityError, SamplingError
from .io import atomic_write_text, csv_text, format_number
from .sampling import ConfoundingFunction, sampler_by_name

# faults that mark a single resample or seed as failed rather than aborting
RECOVERABLE = (EstimationError, SamplingError, PositivityError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class OddsRatio:
    value: float
    table: tuple  # (n11, n10, n01, n00)
    corrected: bool = False

    def __float__(self):
        return self.value

    @property
    def log_se(self) -> float:
        """Large-sample standard error of ``log(value)``."""
        add = 0.5 if self.corrected else 0.0
        return float(np.sqrt(sum(1.0 / (c + add) for c in self.table)))


def odds_ratio_details(a, b) -> OddsRatio:
    """2x2 odds ratio ``n11 n00 / (n10 n01)`` with its table.

    A zero cell triggers the Haldane-Anscombe correction (0.5 added to every
    cell), flagged by ``corrected`` and a ``RuntimeWarning``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if not (is_binary(a) and is_binary(b)):
        raise ValueError("odds ratio needs two binary vectors")
    a1, b1 = a == 1, b == 1
    table = (
        int(np.sum(a1 & b1)),
        int(np.sum(a1 & ~b1)),
        int(np.sum(~a1 & b1)),
        int(np.sum(~a1 & ~b1)),
    )
    n11, n10, n01, n00 = table
    corrected = min(table) == 0
    if corrected:
        warnings.warn("zero cell in 2x2 table; applying +0.5 correction", RuntimeWarning, stacklevel=2)
        n11, n10, n01, n00 = (c + 0.5 for c in table)
    return OddsRatio(float(n11 * n00 / (n10 * n01)), table, corrected)


def odds_ratio(a, b) -> float:
    return odds_ratio_details(a, b).value


@dataclass(frozen=True)
class Association:
    covariate: str
    kind: str  # "odds_ratio" or "correlation"
    statistic: float
    passed: bool


@dataclass(frozen=True)
class PreconditionReport:
    associations: tuple
    passed: bool

    def __getitem__(self, name) -> Association:
        for a in self.associations:
            if a.covariate == name:
                return a
        raise KeyError(name)


def check_precondition(d: TabularDataset, *, min_odds_ratio: float = 1.2, min_abs_corr: float = 0.05) -> PreconditionReport:
    """Association of each covariate with the outcome.

    Binary covariates against a binary outcome are scored by odds ratio and
    pass when ``|log OR| >= log(min_odds_ratio)``; any other pair uses the
    Pearson correlation and passes when ``|r| >= min_abs_corr``. The overall
    check passes if at least one covariate does.
    """
    y = d.outcome
    out = []
    for name in d.covariate_names:
        c = d.column(name)
        if is_binary(c) and is_binary(y):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                stat = odds_ratio(c, y)
            ok = abs(np.log(stat)) >= np.log(min_odds_ratio)
            out.append(Association(name, "odds_ratio", stat, bool(ok)))
        else:
            if np.std(c) == 0 or np.std(y) == 0:
                stat = 0.0
            else:
                stat = float(np.corrcoef(c, y)[0, 1])
            out.append(Association(name, "correlation", stat, bool(abs(stat) >= min_abs_corr)))
    return PreconditionReport(tuple(out), any(a.passed for a in out))


@dataclass(frozen=True)
class OverlapReport:
    covariate: str
    treated_fraction: dict  # level -> P_hat(T=1 | level)
    failing_levels: tuple
    passed: bool


def check_overlap(d: TabularDataset, covariate: str) -> OverlapReport:
    """Empirical ``P(T=1 | covariate=level)`` per level; passes iff all lie strictly in (0, 1)."""
    c = d.column(covariate)
    t = np.asarray(d.treatment)
    frac = {}
    for level in np.unique(c):
        sel = c == level
        frac[level.item()] = float(np.mean(t[sel] == 1))
    failing = tuple(lv for lv, p in frac.items() if not 0.0 < p < 1.0)
    return OverlapReport(covariate, frac, failing, not failing)


@dataclass(frozen=True)
class DiagnosticPoint:
    seed: int
    naive_gap: float
    oracle_gap: float

    @property
    def below_line(self) -> bool:
        return self.oracle_gap < self.naive_gap


@dataclass
class SweepResult:
    confounding: ConfoundingFunction
    points: list
    failures: dict = field(default_factory=dict)  # seed -> message

    @property
    def fraction_below(self) -> float:
        if not self.points:
            return float("nan")
        return float(np.mean([p.below_line for p in self.points]))


def _default_oracle(rct: TabularDataset, covariate: str):
    if is_binary(rct.outcome):
        return ExactBackdoor(covariate)
    return ParametricBackdoor(((covariate,), ("T", covariate)))


def diagnostic_sweep(
    rct: TabularDataset,
    f_grid: Sequence[ConfoundingFunction],
    n_seeds: int = 100,
    master_seed: int = 0,
    *,
    sampler: str = "rejection",
    oracle: Callable[[TabularDataset], float] | None = None,
) -> list[SweepResult]:
    """Naive vs. oracle error for each confounding function over ``n_seeds`` samples.

    GoldATE is the difference in means on ``rct``. The default oracle adjusts
    for the first covariate each function uses: exact cell means when the
    outcome is binary, otherwise a regression on ``C`` and ``T * C`` (the
    same stratified contrast when ``C`` is binary).
    Sampler or estimator faults are recorded per seed and skipped.
    """
    gold = diff_in_means(rct).point_estimate
    sample = sampler_by_name(sampler)
    out = []
    for fi, f in enumerate(f_grid):
        est = oracle or _default_oracle(rct, f.variables[0])
        res = SweepResult(f, [])
        for s in range(n_seeds):
            try:
                obs = sample(rct, f, substream(master_seed, 7, fi, s)).output
                naive = diff_in_means(obs).point_estimate
                adj = float(est(obs))
            except RECOVERABLE as exc:
                res.failures[s] = str(exc)
                continue
            res.points.append(DiagnosticPoint(s, abs(gold - naive), abs(gold - adj)))
        out.append(res)
    return out


def diagnostic_csv_text(points: Sequence[DiagnosticPoint]) -> str:
    rows = [(p.seed, format_number(p.naive_gap), format_number(p.oracle_gap), int(p.below_line)) for p in points]
    return csv_text(("seed", "naive_gap", "oracle_gap", "below_line"), rows)


def diagnostic_svg(points: Sequence[DiagnosticPoint], title: str = "", size: int = 360) -> str:
    """Scatter of oracle gap against naive gap with the ``y = x`` reference line."""
    pad = 40
    top = max([p.naive_gap for p in points] + [p.oracle_gap for p in points] + [1e-9]) * 1.05
    span = size - 2 * pad

    def px(v):
        return pad + v / top * span

    def py(v):
        return size - pad - v / top * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="#444"/>',
        f'<line x1="{px(0):.2f}" y1="{py(0):.2f}" x2="{px(top):.2f}" y2="{py(top):.2f}" stroke="red"/>',
    ]
    for p in points:
        parts.append(
            f'<circle cx="{px(p.naive_gap):.2f}" cy="{py(p.oracle_gap):.2f}" r="2.5" fill="none" stroke="#1f5fbf"/>'
        )
    parts += [
        f'<text x="{size / 2:.0f}" y="{size - 8}" text-anchor="middle" font-size="12">|GoldATE - naive|</text>',
        f'<text x="12" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2:.0f})">|GoldATE - oracle|</text>',
        f'<text x="{size / 2:.0f}" y="20" text-anchor="middle" font-size="12">{title}</text>',
        f'<text x="{pad}" y="{size - pad + 14}" font-size="10">0</text>',
        f'<text x="{size - pad}" y="{size - pad + 14}" text-anchor="end" font-size="10">{top:.3g}</text>',
        "</svg>",
    ]
    return "\n".join(parts) + "\n"


def write_diagnostics(results: Sequence[SweepResult], outdir) -> list:
    """One CSV and one SVG per confounding function; returns the written paths."""
    outdir = Path(outdir)
    paths = []
    for i, r in enumerate(results):
        label = f"f{i:02d}"
        paths.append(atomic_write_text(outdir / f"diagnostic_{label}.csv", diagnostic_csv_text(r.points)))
        title = f"{label}: {r.fraction_below:.2f} below y=x"
        paths.append(atomic_write_text(outdir / f"diagnostic_{label}.svg", diagnostic_svg(r.points, title)))
    return paths


@dataclass
class BootstrapCI:
    lo: float
    hi: float
    level: float
    n_boot: int
    n_failed: int = 0
    replicates: np.ndarray | None = field(default=None, repr=False)

    def __iter__(self):
        yield self.lo
        yield self.hi

    def covers(self, value) -> bool:
        return self.lo <= value <= self.hi


def _resample_counts(rng, n, k):
    """``k`` rows of bootstrap multiplicities: row ``b`` counts how often each index was drawn."""
    W = np.empty((k, n))
    for b in range(k):
        W[b] = np.bincount(rng.integers(0, n, n), minlength=n)
    return W


def bootstrap_ci(
    d: TabularDataset,
    estimator,
    n_boot: int = 1000,
    level: float = 0.95,
    rng=0,
    *,
    keep_replicates: bool = False,
    chunk_size: int | None = None,
) -> BootstrapCI:
    """Percentile bootstrap interval from ``n_boot`` row resamples.

    Resample ``b`` draws ``n`` row indices uniformly with replacement. If the
    estimator fails on a resample (or returns a non-finite value), a fresh
    resample replaces it; after ``10 * n_boot`` attempts in total an
    :class:`EstimationError` is raised. Endpoints are the ``(1 - level) / 2``
    and ``(1 + level) / 2`` sample quantiles (linear interpolation).

    Estimators exposing ``weighted_batch(d, W)`` are evaluated on blocks of
    resamples at once through their multiplicity vectors. Both code paths
    consume the random stream the same way and select the same resamples.
    """
    if n_boot < 1:
        raise ValueError("n_boot must be positive")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    rng = make_rng(rng)
    n = d.n_rows
    cap = 10 * n_boot
    reps = []
    attempts = 0
    if hasattr(estimator, "weighted_batch"):
        chunk = chunk_size or max(1, min(250, 20_000_000 // max(n, 1)))
        while len(reps) < n_boot:
            k = min(chunk, n_boot - len(reps), cap - attempts)
            if k <= 0:
                break
            W = _resample_counts(rng, n, k)
            vals = np.asarray(estimator.weighted_batch(d, W), dtype=float)
            attempts += k
            reps.extend(vals[np.isfinite(vals)].tolist())
    else:
        while len(reps) < n_boot and attempts < cap:
            idx = rng.integers(0, n, n)
            attempts += 1
            try:
                v = float(estimator(d.take(idx)))
            except RECOVERABLE:
                continue
            if np.isfinite(v):
                reps.append(v)
    n_failed = attempts - len(reps)
    if len(reps) < n_boot:
        raise EstimationError(f"bootstrap gave up after {attempts} resamples ({n_failed} failed)")
    reps = np.asarray(reps)
    alpha = 1.0 - level
    lo, hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2])
    return BootstrapCI(float(lo), float(hi), level, n_boot, n_failed, reps if keep_replicates else None)


@dataclass(frozen=True)
class CoverageReport:
    n_seeds: int
    n_covered: int
    ci_level: float = 0.95

    @property
    def coverage(self) -> float:
        return self.n_covered / self.n_seeds


def coverage(records, truth, ci_level: float = 0.95) -> CoverageReport:
    """Fraction of ``(lo, hi)`` intervals containing ``truth`` (a scalar or one value per interval)."""
    records = [tuple(r) for r in records]
    if not records:
        raise ValueError("coverage needs at least one interval")
    lo = np.array([r[0] for r in records], dtype=float)
    hi = np.array([r[1] for r in records], dtype=float)
    truth = np.broadcast_to(np.asarray(truth, dtype=float), lo.shape)
    covered = int(np.sum((lo <= truth) & (truth <= hi)))
    return CoverageReport(len(records), covered, ci_level)


OVERLAP_BAND = (0.05, 0.95)


def admissible_strengths(intercept: float = -1.0, band=OVERLAP_BAND) -> tuple:
    """Open interval of ``x`` keeping ``expit(intercept + x c)`` inside ``band`` for binary ``c``."""
    lo, hi = (np.log(p / (1 - p)) for p in band)
    if not lo < intercept < hi:
        return (np.nan, np.nan)
    return (lo - intercept, hi - intercept)


@dataclass(frozen=True)
class StrengthRow:
    strength: float
    n_seeds: int
    mean_estimate: float
    std_estimate: float
    mean_gold: float
    mean_abs_bias: float
    n_failed: int = 0


def confounding_strength_sweep(
    setting: DgpSetting | str,
    strengths: Sequence[float],
    n_seeds: int = 1000,
    master_seed: int = 0,
    *,
    n: int | None = None,
) -> list[StrengthRow]:
    """Rejection sampling plus oracle adjustment under ``expit(-1 + x C)`` for each strength ``x``.

    All strengths share the per-seed RCT draw. Strengths that push
    ``P*(T=1|C)`` outside ``(0.05, 0.95)`` are rejected before any work.
    """
    if isinstance(setting, str):
        setting = get_setting(setting)
    if setting.id == "setting3":
        raise ConfigError("the strength sweep is defined for the single binary covariate settings")
    lo, hi = admissible_strengths()
    bad = [x for x in strengths if not lo < x < hi]
    if bad:
        raise ConfigError(f"strengths {bad} leave the overlap band; admissible range is ({lo:.4f}, {hi:.4f})")
    est = ParametricBackdoor(setting.oracle_adjustment_terms)
    sample = sampler_by_name("rejection")
    fs = [strength_confounding_function(x) for x in strengths]
    results = {i: ([], [], 0) for i in range(len(fs))}
    for s in range(n_seeds):
        rct = generate(setting, substream(master_seed, 11, s), n)
        gold = diff_in_means(rct).point_estimate
        for i, f in enumerate(fs):
            ests, golds, nf = results[i]
            try:
                obs = sample(rct, f, substream(master_seed, 12, i, s)).output
                ests.append(est(obs))
                golds.append(gold)
            except RECOVERABLE:
                results[i] = (ests, golds, nf + 1)
    rows = []
    for i, x in enumerate(strengths):
        ests, golds, nf = results[i]
        e, g = np.asarray(ests), np.asarray(golds)
        rows.append(
            StrengthRow(float(x), len(e), float(e.mean()), float(e.std()), float(g.mean()), float(np.mean(np.abs(e - g))), nf)
        )
    return rows


__all__ = [
    "Association",
    "BootstrapCI",
    "CoverageReport",
    "DiagnosticPoint",
    "OddsRatio",
    "OverlapReport",
    "PreconditionReport",
    "StrengthRow",
    "SweepResult",
    "admissible_strengths",
    "bootstrap_ci",
    "check_overlap",
    "check_precondition",
    "confounding_strength_sweep",
    "coverage",
    "diagnostic_svg",
    "diagnostic_sweep",
    "odds_ratio",
    "odds_ratio_details",
    "write_diagnostics",
]
