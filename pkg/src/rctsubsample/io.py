"""CSV ingest and export, and atomic file writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import TabularDataset, check_dataset
from .exceptions import ConfigError, DatasetError


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_json(path, obj) -> Path:
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def format_number(x) -> str:
    """Shortest round-tripping text for a number; integers print without a decimal point."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x.is_integer() and abs(x) < 2**53 and not (x == 0 and np.signbit(x)):
        return str(int(x))
    return repr(x)


@dataclass
class CsvSchema:
    """How CSV columns map onto a dataset.

    Parameters
    ----------
    treatment, outcome : str
        Column names of ``T`` and ``Y``.
    covariates : list of str
        Numeric covariate columns.
    binary : list of str
        Columns coerced to 0/1. Accepted spellings are 0/1, true/false,
        yes/no and t/f (case-insensitive).
    text : list of str
        Columns kept verbatim in ``meta`` (document text, category labels).
    """

    treatment: str = "T"
    outcome: str = "Y"
    covariates: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    text: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, d) -> "CsvSchema":
        unknown = set(d) - {"treatment", "outcome", "covariates", "binary", "text"}
        if unknown:
            raise ConfigError(f"unknown schema keys: {sorted(unknown)}")
        return cls(**{k: list(v) if isinstance(v, (list, tuple)) else v for k, v in d.items()})

    @classmethod
    def load(cls, path) -> "CsvSchema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read schema {path}: {exc}") from None


_TRUE = {"1", "1.0", "true", "t", "yes", "y"}
_FALSE = {"0", "0.0", "false", "f", "no", "n"}


def _coerce(name, values, binary, start_row):
    out = np.empty(len(values))
    for i, raw in enumerate(values):
        s = raw.strip()
        if binary:
            low = s.lower()
            if low in _TRUE:
                out[i] = 1.0
                continue
            if low in _FALSE:
                out[i] = 0.0
                continue
            raise DatasetError(f"row {i + start_row}, column {name!r}: cannot read {raw!r} as binary")
        if s == "" or s.lower() in {"na", "nan", "null", "none"}:
            raise DatasetError(f"row {i + start_row}, column {name!r}: missing value")
        try:
            out[i] = float(s)
        except ValueError:
            raise DatasetError(f"row {i + start_row}, column {name!r}: non-numeric value {raw!r}") from None
        if not np.isfinite(out[i]):
            raise DatasetError(f"row {i + start_row}, column {name!r}: non-finite value {raw!r}")
    return out


def ingest_csv(path, schema: CsvSchema | dict | None = None) -> TabularDataset:
    """Read a header-first UTF-8 CSV into a validated dataset.

    Row numbers in error messages count the header as row 1, as a
    spreadsheet would.
    """
    schema = schema or CsvSchema()
    if isinstance(schema, dict):
        schema = CsvSchema.from_dict(schema)
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        rows = list(reader)
    header = [h.strip() for h in header]
    covs = list(schema.covariates)
    if not covs:
        reserved = {schema.treatment, schema.outcome, *schema.text}
        covs = [h for h in header if h not in reserved]
    needed = [schema.treatment, schema.outcome, *covs, *schema.text]
    missing = [c for c in needed if c not in header]
    if missing:
        raise DatasetError(f"{path}: missing required column(s) {missing}")
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise DatasetError(f"row {i + 2}: expected {len(header)} fields, got {len(r)}")
    pos = {h: j for j, h in enumerate(header)}
    binary = {schema.treatment, *schema.binary}

    def col(name):
        return _coerce(name, [r[pos[name]] for r in rows], name in binary, 2)

    t = col(schema.treatment).astype(np.int64)
    y = col(schema.outcome)
    cov = np.column_stack([col(c) for c in covs]) if covs else np.empty((len(rows), 0))
    meta = {c: np.array([r[pos[c]] for r in rows], dtype=object) for c in schema.text}
    return check_dataset(TabularDataset(cov, t, y, tuple(covs), meta=meta))


def dataset_csv_text(d: TabularDataset) -> str:
    names = [*d.covariate_names, *d.meta.keys(), "T", "Y"]
    rows = []
    for i in range(d.n_rows):
        row = [format_number(v) for v in d.covariates[i]]
        row += [str(d.meta[k][i]) for k in d.meta]
        row += [format_number(d.treatment[i]), format_number(d.outcome[i])]
        rows.append(row)
    return csv_text(names, rows)


def write_dataset_csv(d: TabularDataset, path) -> Path:
    """Write ``d`` so that :func:`ingest_csv` with ``schema_for(d)`` reads it back exactly.

    Proxy matrices are not written.
    """
    return atomic_write_text(path, dataset_csv_text(d))


def schema_for(d: TabularDataset) -> CsvSchema:
    """Schema that reads back a file written by :func:`write_dataset_csv`."""
    return CsvSchema(covariates=list(d.covariate_names), text=list(d.meta))
