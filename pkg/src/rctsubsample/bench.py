"""Config-driven benchmark runner and report writer.

A run loops over seeds; for each seed it draws (or loads) an RCT, applies
every configured sampler, runs every configured estimator on the sampled
data and, if ``n_boot > 0``, a percentile bootstrap interval. Each task has
its own random stream keyed by ``(master_seed, stage, setting, sampler,
estimator, seed)``, so results do not depend on task order or worker count.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .data import RNG_ALGORITHM, TabularDataset, substream
from .dgp import SETTING_IDS, dgp_confounding_function, generate, get_setting
from .diagnostics import RECOVERABLE, bootstrap_ci
from .estimators.ate import (
    ESTIMATOR_NAMES,
    NUISANCE_ESTIMATORS,
    DifferenceInMeans,
    ExactBackdoor,
    ParametricBackdoor,
    diff_in_means,
)
from .estimators.crossfit import CrossFitATE
from .estimators.learners import BaseLearnerSpec
from .exceptions import BenchmarkAborted, ConfigError
from .io import CsvSchema, atomic_write_json, atomic_write_text, csv_text, format_number, ingest_csv
from .poc import PocConfig, featurize_rct
from .sampling import SAMPLERS, ConfoundingFunction

SAMPLER_CODES = {"none": 0, "rejection": 1, "gentzel": 2}
ESTIMATOR_CODES = {name: i for i, name in enumerate(ESTIMATOR_NAMES)}
# stage codes for substreams
_RCT, _SAMPLE, _BOOT, _FIT = 1, 2, 3, 4
MAX_FAILURE_FRACTION = 0.10

_CONFIG_KEYS = {
    "data",
    "confounding",
    "samplers",
    "estimators",
    "adjustment_terms",
    "exact_covariate",
    "learner",
    "k_folds",
    "features",
    "clip_eps",
    "n_seeds",
    "n_boot",
    "ci_level",
    "master_seed",
    "out_dir",
    "n_jobs",
    "diagnose",
    "rng_algorithm",
    "version",
}


@dataclass
class BenchmarkConfig:
    """Everything needed to reproduce a benchmark run.

    ``data`` is either ``{"kind": "dgp", "settings": [...], "n": ..., "c2_sign": ...}``
    or ``{"kind": "csv", "path": ..., "schema": {...} | path}``. ``confounding``
    is a confounding-function config; for synthetic data it defaults to each
    setting's designer function. ``adjustment_terms`` defaults to each
    setting's oracle terms.
    """

    data: dict = field(default_factory=lambda: {"kind": "dgp", "settings": ["setting1"]})
    confounding: dict | None = None
    samplers: list = field(default_factory=lambda: ["rejection", "gentzel"])
    estimators: list = field(default_factory=lambda: ["backdoor_param"])
    adjustment_terms: list | None = None
    exact_covariate: str | None = None
    learner: dict = field(default_factory=lambda: BaseLearnerSpec().to_dict())
    k_folds: int = 5
    features: str = "covariates"
    clip_eps: float = 0.01
    n_seeds: int = 1000
    n_boot: int = 1000
    ci_level: float = 0.95
    master_seed: int = 0
    out_dir: str = "bench_out"
    n_jobs: int = 1
    diagnose: dict | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        data = dict(self.data or {})
        kind = data.get("kind", "dgp")
        if kind == "dgp":
            settings = data.get("settings", ["setting1"])
            if isinstance(settings, str):
                settings = [settings]
            for s in settings:
                if str(s).lower() not in SETTING_IDS:
                    raise ConfigError(f"unknown setting {s!r}; expected one of {SETTING_IDS}")
            data = {
                "kind": "dgp",
                "settings": [str(s).lower() for s in settings],
                "n": int(data.get("n", 100_000)),
                "c2_sign": int(data.get("c2_sign", 1)),
            }
            if data["n"] < 1:
                raise ConfigError("data.n must be at least 1")
        elif kind == "csv":
            path = data.get("path")
            if not path or not Path(path).exists():
                raise ConfigError(f"data file {path!r} does not exist")
            schema = data.get("schema", {})
            if isinstance(schema, str):
                if not Path(schema).exists():
                    raise ConfigError(f"schema file {schema!r} does not exist")
                schema = asdict(CsvSchema.load(schema))
            data = {"kind": "csv", "path": str(path), "schema": asdict(CsvSchema.from_dict(schema))}
        else:
            raise ConfigError(f"data.kind must be 'dgp' or 'csv', got {kind!r}")
        self.data = data

        if not self.samplers:
            raise ConfigError("at least one sampler is required")
        for s in self.samplers:
            if s not in SAMPLER_CODES:
                raise ConfigError(f"unknown sampler {s!r}; expected one of {sorted(SAMPLER_CODES)}")
        if not self.estimators:
            raise ConfigError("at least one estimator is required")
        for e in self.estimators:
            if e not in ESTIMATOR_CODES:
                raise ConfigError(f"unknown estimator {e!r}; expected one of {list(ESTIMATOR_NAMES)}")
        if self.confounding is not None:
            ConfoundingFunction.from_config(self.confounding)
        elif kind == "csv" and any(s != "none" for s in self.samplers):
            raise ConfigError("csv data with a sampler needs an explicit confounding function")
        self.learner = BaseLearnerSpec.from_dict(self.learner).to_dict()
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if self.n_boot < 0:
            raise ConfigError("n_boot must be non-negative (0 disables intervals)")
        if not 0 < self.ci_level < 1:
            raise ConfigError("ci_level must lie in (0, 1)")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be at least 2")
        if self.features not in ("covariates", "proxies", "both"):
            raise ConfigError("features must be 'covariates', 'proxies' or 'both'")
        if self.n_jobs == 0:
            raise ConfigError("n_jobs must be nonzero")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        unknown = set(d) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        algo = d.get("rng_algorithm", RNG_ALGORITHM)
        if algo != RNG_ALGORITHM:
            raise ConfigError(f"config was produced with generator {algo!r}; this build uses {RNG_ALGORITHM!r}")
        kw = {k: v for k, v in d.items() if k not in ("rng_algorithm", "version")}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def lock(self) -> dict:
        """Fully resolved config; loading it reproduces the run."""
        d = self.to_dict()
        d["rng_algorithm"] = RNG_ALGORITHM
        d["version"] = __version__
        return d

    # resolved pieces ---------------------------------------------------

    def sources(self) -> list[str]:
        return self.data["settings"] if self.data["kind"] == "dgp" else ["csv"]

    def confounding_for(self, source: str) -> ConfoundingFunction:
        if self.confounding is not None:
            return ConfoundingFunction.from_config(self.confounding)
        return dgp_confounding_function(source)

    def terms_for(self, source: str):
        if self.adjustment_terms is not None:
            return tuple(tuple(t) for t in self.adjustment_terms)
        if source == "csv":
            raise ConfigError("csv data with backdoor_param needs adjustment_terms")
        return get_setting(source).oracle_adjustment_terms


def _estimator(cfg: BenchmarkConfig, name: str, source: str, seed_key):
    if name == "dim":
        return DifferenceInMeans()
    if name == "backdoor_param":
        return ParametricBackdoor(cfg.terms_for(source))
    if name == "backdoor_exact":
        cov = cfg.exact_covariate or cfg.confounding_for(source).variables[0]
        return ExactBackdoor(cov)
    if name in NUISANCE_ESTIMATORS:
        return CrossFitATE(
            name,
            BaseLearnerSpec.from_dict(cfg.learner),
            cfg.k_folds,
            cfg.features,
            cfg.clip_eps,
            random_state=substream(*seed_key).integers(0, 2**32),
        )
    raise ConfigError(f"unknown estimator {name!r}")


def _load_csv(cfg):
    d = ingest_csv(cfg.data["path"], cfg.data["schema"])
    text = cfg.data["schema"].get("text") or []
    if cfg.features in ("proxies", "both") and text:
        d = featurize_rct(d, PocConfig(text_column=text[0]))
    return d


def _rct_for(cfg, si, source, seed, cache):
    if source == "csv":
        if "csv" not in cache:
            cache["csv"] = _load_csv(cfg)
        return cache["csv"]
    setting = get_setting(source, cfg.data["n"], c2_sign=cfg.data["c2_sign"])
    return generate(setting, substream(cfg.master_seed, _RCT, si, seed))


PER_SEED_COLUMNS = (
    "setting",
    "sampler",
    "estimator",
    "seed",
    "status",
    "n_rct",
    "n_obs",
    "gold_ate",
    "estimate",
    "abs_bias",
    "rel_abs_bias",
    "ci_lo",
    "ci_hi",
    "covered",
    "covers_true_ate",
    "n_boot_failed",
    "error",
)


def run_seed(cfg: BenchmarkConfig, seed: int, cache=None) -> list[dict]:
    """All (setting, sampler, estimator) records for one seed."""
    cache = {} if cache is None else cache
    out = []
    m = cfg.master_seed
    for si, source in enumerate(cfg.sources()):
        rct = _rct_for(cfg, si, source, seed, cache)
        gold = diff_in_means(rct).point_estimate
        truth = None if source == "csv" else _true_ate(cfg, source)
        f = cfg.confounding_for(source) if any(s != "none" for s in cfg.samplers) else None
        for sampler in cfg.samplers:
            sc = SAMPLER_CODES[sampler]
            base = {"setting": source, "sampler": sampler, "seed": seed, "n_rct": rct.n_rows, "gold_ate": gold}
            try:
                obs = rct if sampler == "none" else SAMPLERS[sampler](rct, f, substream(m, _SAMPLE, si, sc, seed)).output
            except RECOVERABLE as exc:
                for name in cfg.estimators:
                    out.append(_failed(base, name, exc))
                continue
            for name in cfg.estimators:
                ec = ESTIMATOR_CODES[name]
                rec = dict(base, estimator=name, n_obs=obs.n_rows)
                try:
                    est = _estimator(cfg, name, source, (m, _FIT, si, sc, ec, seed))
                    value = float(est(obs))
                    if not np.isfinite(value):
                        raise ArithmeticError("non-finite estimate")
                    rec.update(status="ok", estimate=value, error="")
                    rec["abs_bias"] = abs(value - gold)
                    rec["rel_abs_bias"] = rec["abs_bias"] / abs(gold) if gold != 0 else float("nan")
                    if cfg.n_boot > 0:
                        ci = bootstrap_ci(obs, est, cfg.n_boot, cfg.ci_level, substream(m, _BOOT, si, sc, ec, seed))
                        rec.update(ci_lo=ci.lo, ci_hi=ci.hi, covered=int(ci.covers(gold)), n_boot_failed=ci.n_failed)
                        if truth is not None:
                            rec["covers_true_ate"] = int(ci.covers(truth))
                except (*RECOVERABLE, ArithmeticError) as exc:
                    rec = _failed(base, name, exc, n_obs=obs.n_rows)
                out.append(rec)
    return out


def _true_ate(cfg, source):
    return get_setting(source, cfg.data["n"], c2_sign=cfg.data["c2_sign"]).true_ate


def _failed(base, name, exc, n_obs=0):
    return dict(base, estimator=name, n_obs=n_obs, status="failed", error=f"{type(exc).__name__}: {exc}")


@dataclass
class BenchmarkResult:
    config: BenchmarkConfig
    records: list

    def cells(self) -> list[tuple]:
        seen = []
        for r in self.records:
            key = (r["setting"], r["sampler"], r["estimator"])
            if key not in seen:
                seen.append(key)
        return seen

    def table(self) -> list[dict]:
        """One aggregate row per (setting, sampler, estimator); stds use ``ddof=0``."""
        rows = []
        for key in self.cells():
            recs = [r for r in self.records if (r["setting"], r["sampler"], r["estimator"]) == key]
            ok = [r for r in recs if r["status"] == "ok"]
            row = dict(zip(("setting", "sampler", "estimator"), key))
            row["n_seeds"] = len(recs)
            row["n_failed"] = len(recs) - len(ok)
            row.update(aggregate(ok))
            rows.append(row)
        return rows

    def failure_fraction(self) -> float:
        worst = 0.0
        for key in self.cells():
            recs = [r for r in self.records if (r["setting"], r["sampler"], r["estimator"]) == key]
            worst = max(worst, sum(r["status"] != "ok" for r in recs) / len(recs))
        return worst


def aggregate(ok: list[dict]) -> dict:
    def stat(col, fn):
        vals = np.array([r[col] for r in ok if col in r], dtype=float)
        return float(fn(vals)) if len(vals) else float("nan")

    return {
        "gold_ate_mean": stat("gold_ate", np.mean),
        "estimate_mean": stat("estimate", np.mean),
        "abs_bias_mean": stat("abs_bias", np.mean),
        "abs_bias_std": stat("abs_bias", np.std),
        "rel_abs_bias_mean": stat("rel_abs_bias", np.mean),
        "rel_abs_bias_std": stat("rel_abs_bias", np.std),
        "coverage": stat("covered", np.mean),
        "coverage_true_ate": stat("covers_true_ate", np.mean),
    }


TABLE_COLUMNS = (
    "setting",
    "sampler",
    "estimator",
    "n_seeds",
    "n_failed",
    "gold_ate_mean",
    "estimate_mean",
    "abs_bias_mean",
    "abs_bias_std",
    "rel_abs_bias_mean",
    "rel_abs_bias_std",
    "coverage",
    "coverage_true_ate",
)


def run_benchmark(cfg: BenchmarkConfig, *, check_failures: bool = True) -> BenchmarkResult:
    """Run every seed (in parallel when ``cfg.n_jobs != 1``) and collect the records.

    Raises :class:`BenchmarkAborted` (carrying the result) when more than
    10% of the seeds of any cell failed.
    """
    seeds = range(cfg.n_seeds)
    if cfg.n_jobs == 1:
        cache = {}
        chunks = [run_seed(cfg, s, cache) for s in seeds]
    else:
        chunks = Parallel(n_jobs=cfg.n_jobs)(delayed(run_seed)(cfg, s) for s in seeds)
    records = [r for chunk in chunks for r in chunk]
    result = BenchmarkResult(cfg, records)
    if check_failures:
        frac = result.failure_fraction()
        if frac > MAX_FAILURE_FRACTION:
            n_total = cfg.n_seeds
            exc = BenchmarkAborted(int(round(frac * n_total)), n_total)
            exc.result = result
            raise exc
    return result


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, float) and np.isnan(v):
        return "nan"
    return format_number(v)


def per_seed_csv_text(result: BenchmarkResult) -> str:
    rows = [[_cell(r.get(c)) for c in PER_SEED_COLUMNS] for r in result.records]
    return csv_text(PER_SEED_COLUMNS, rows)


def table_csv_text(result: BenchmarkResult) -> str:
    rows = [[_cell(r[c]) for c in TABLE_COLUMNS] for r in result.table()]
    return csv_text(TABLE_COLUMNS, rows)


def emit_reports(result: BenchmarkResult, outdir=None) -> dict:
    """Write ``table2.csv``, ``per_seed.csv`` and ``config.lock.json``; returns their paths."""
    if not result.records:
        raise ValueError("nothing to report: the result has no records")
    outdir = Path(outdir or result.config.out_dir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    lock = result.config.lock()
    lock["out_dir"] = str(outdir)
    return {
        "table2": atomic_write_text(outdir / "table2.csv", table_csv_text(result)),
        "per_seed": atomic_write_text(outdir / "per_seed.csv", per_seed_csv_text(result)),
        "lock": atomic_write_json(outdir / "config.lock.json", lock),
    }


def table2_config(**overrides) -> BenchmarkConfig:
    """The synthetic-data comparison of both samplers across the three settings."""
    d = dict(
        data={"kind": "dgp", "settings": list(SETTING_IDS), "n": 100_000},
        samplers=["rejection", "gentzel"],
        estimators=["backdoor_param"],
        n_seeds=1000,
        n_boot=1000,
    )
    d.update(overrides)
    return BenchmarkConfig(**d)


def rct_only_config(**overrides) -> BenchmarkConfig:
    """Difference in means on the RCT draws themselves."""
    d = dict(
        data={"kind": "dgp", "settings": list(SETTING_IDS), "n": 100_000},
        samplers=["none"],
        estimators=["dim"],
        n_seeds=100,
        n_boot=0,
    )
    d.update(overrides)
    return BenchmarkConfig(**d)


def load_rct(cfg: BenchmarkConfig, source: str, seed: int = 0) -> TabularDataset:
    """The RCT a run would use for ``source`` at ``seed``."""
    si = cfg.sources().index(source)
    return _rct_for(cfg, si, source, seed, {})
