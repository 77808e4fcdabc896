"""``bench`` command line: run benchmarks, run sampling diagnostics, ingest CSV data.

Exit codes: 0 success, 2 configuration or input error, 3 more than 10% of
seeds failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .bench import BenchmarkConfig, emit_reports, load_rct, run_benchmark
from .data import summary
from .diagnostics import check_overlap, check_precondition, diagnostic_sweep, write_diagnostics
from .exceptions import BenchmarkAborted, ConfigError, DatasetError
from .io import CsvSchema, atomic_write_json, ingest_csv
from .sampling import ConfoundingFunction, piecewise_grid, sampler_by_name

EXIT_OK, EXIT_CONFIG, EXIT_FAILURES = 0, 2, 3


def _cmd_run(args) -> int:
    cfg = BenchmarkConfig.load(args.config)
    if args.seeds is not None:
        cfg.n_seeds = args.seeds
    if args.out is not None:
        cfg.out_dir = args.out
    if args.jobs is not None:
        cfg.n_jobs = args.jobs
    cfg.validate()
    try:
        result = run_benchmark(cfg)
    except BenchmarkAborted as exc:
        emit_reports(exc.result, cfg.out_dir)
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    paths = emit_reports(result, cfg.out_dir)
    for row in result.table():
        print(
            f"{row['setting']:>9} {row['sampler']:>9} {row['estimator']:>14}  "
            f"ate {row['estimate_mean']:+.3f}  abs bias {row['abs_bias_mean']:.3f} ({row['abs_bias_std']:.3f})  "
            f"rel {row['rel_abs_bias_mean']:.3f}  coverage {row['coverage']:.2f}  failed {row['n_failed']}"
        )
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _diagnose_grid(spec: dict):
    """Confounding functions from ``{"covariate": "C", "zetas": [[z0, z1], ...]}``
    or ``{"functions": [<confounding config>, ...]}``."""
    if "functions" in spec:
        return [ConfoundingFunction.from_config(f) for f in spec["functions"]]
    zetas = spec.get("zetas")
    if not zetas:
        raise ConfigError("diagnose needs 'zetas' or 'functions'")
    return piecewise_grid(spec.get("covariate", "C"), [tuple(z) for z in zetas])


def _cmd_diagnose(args) -> int:
    cfg = BenchmarkConfig.load(args.config)
    spec = dict(cfg.diagnose or {})
    grid = _diagnose_grid(spec) if spec else [cfg.confounding_for(cfg.sources()[0])]
    n_seeds = int(spec.get("n_seeds", 100))
    sampler = spec.get("sampler", "rejection")
    sampler_by_name(sampler)
    out = Path(args.out or cfg.out_dir)
    report = {}
    for source in cfg.sources():
        rct = load_rct(cfg, source, 0)
        pre = check_precondition(rct)
        res = diagnostic_sweep(rct, grid, n_seeds, cfg.master_seed, sampler=sampler)
        write_diagnostics(res, out / source)
        overlap = {}
        for i, f in enumerate(grid):
            obs = sampler_by_name(sampler)(rct, f, cfg.master_seed).output
            overlap[f"f{i:02d}"] = {v: asdict(check_overlap(obs, v)) for v in f.variables}
        report[source] = {
            "precondition": {"passed": pre.passed, "associations": [asdict(a) for a in pre.associations]},
            "overlap": overlap,
            "fraction_below": {f"f{i:02d}": r.fraction_below for i, r in enumerate(res)},
            "failures": {f"f{i:02d}": len(r.failures) for i, r in enumerate(res)},
            "functions": {f"f{i:02d}": f.to_config() for i, f in enumerate(grid)},
        }
        print(f"{source}: precondition {'pass' if pre.passed else 'FAIL'}")
        for i, r in enumerate(res):
            print(f"  f{i:02d} {grid[i].to_config()}: {r.fraction_below:.2f} of seeds below y=x")
    atomic_write_json(out / "diagnostics.json", json.loads(json.dumps(report, default=str)))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    schema = CsvSchema.load(args.schema) if args.schema else CsvSchema()
    d = ingest_csv(args.csv, schema)
    s = summary(d)
    print(
        json.dumps(
            {
                "n_rows": s.n_rows,
                "treated_fraction": s.treated_fraction,
                "mean_outcome_by_arm": list(s.mean_outcome_by_arm),
                "covariate_means": s.covariate_means,
                "columns": list(d.column_names),
            },
            indent=2,
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark and write table2.csv, per_seed.csv, config.lock.json")
    run.add_argument("--config", required=True)
    run.add_argument("--seeds", type=int, help="override n_seeds")
    run.add_argument("--out", help="override out_dir")
    run.add_argument("--jobs", type=int, help="override n_jobs")
    run.set_defaults(func=_cmd_run)

    diag = sub.add_parser("diagnose", help="precondition, overlap and naive-vs-oracle diagnostics")
    diag.add_argument("--config", required=True)
    diag.add_argument("--out", help="override out_dir")
    diag.set_defaults(func=_cmd_diagnose)

    ing = sub.add_parser("ingest", help="validate a CSV file and print summary statistics")
    ing.add_argument("--csv", required=True)
    ing.add_argument("--schema")
    ing.set_defaults(func=_cmd_ingest)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
