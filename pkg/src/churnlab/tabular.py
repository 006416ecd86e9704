"""Typed column-store table, CSV ingestion and deduplication.

Numeric cells (including the binary target) are stored as float64; categorical
and identifier cells as Python strings. Every column carries a boolean missing
mask; the stored value under a set mask is a placeholder and must be ignored.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from churnlab.errors import FormatError, ParseError, SchemaError

NUMERIC_CONTINUOUS = "numeric-continuous"
NUMERIC_DISCRETE = "numeric-discrete"
CATEGORICAL = "categorical"
TARGET = "binary-target"
IDENTIFIER = "identifier"

KINDS = (NUMERIC_CONTINUOUS, NUMERIC_DISCRETE, CATEGORICAL, TARGET, IDENTIFIER)
NUMERIC_KINDS = (NUMERIC_CONTINUOUS, NUMERIC_DISCRETE)
FLOAT_KINDS = (NUMERIC_CONTINUOUS, NUMERIC_DISCRETE, TARGET)

MISSING_MARKERS = frozenset({"", "NA"})


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    allowed_categories: tuple[str, ...] | None = None
    # raw spelling -> canonical category, applied before membership checks
    aliases: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.allowed_categories is not None:
            object.__setattr__(self, "allowed_categories", tuple(self.allowed_categories))
        if self.kind == CATEGORICAL:
            if not self.allowed_categories:
                raise SchemaError(f"categorical column {self.name!r} needs allowed_categories")
            if len(set(self.allowed_categories)) != len(self.allowed_categories):
                raise SchemaError(f"column {self.name!r}: duplicate categories")
            bad = [v for v in self.aliases.values() if v not in self.allowed_categories]
            if bad:
                raise SchemaError(f"column {self.name!r}: alias targets {bad} not allowed")
        elif self.allowed_categories:
            raise SchemaError(f"column {self.name!r}: allowed_categories only valid for categorical")

    @property
    def is_numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    def to_json(self) -> dict:
        out = {"name": self.name, "kind": self.kind}
        if self.allowed_categories is not None:
            out["allowed_categories"] = list(self.allowed_categories)
        if self.aliases:
            out["aliases"] = dict(sorted(self.aliases.items()))
        return out

    @classmethod
    def from_json(cls, doc: Mapping) -> "ColumnSchema":
        try:
            return cls(
                name=doc["name"],
                kind=doc["kind"],
                allowed_categories=doc.get("allowed_categories"),
                aliases=dict(doc.get("aliases", {})),
            )
        except KeyError as exc:
            raise SchemaError(f"schema entry missing key {exc}") from None


def validate_schema(schema: Sequence[ColumnSchema]) -> tuple[ColumnSchema, ...]:
    schema = tuple(schema)
    names = [c.name for c in schema]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaError(f"duplicate column names: {dupes}")
    n_target = sum(c.kind == TARGET for c in schema)
    if n_target != 1:
        raise SchemaError(f"schema needs exactly one binary-target column, found {n_target}")
    return schema


def load_schema(path: str | Path) -> tuple[ColumnSchema, ...]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, Mapping):
        doc = doc.get("columns", [])
    return validate_schema(ColumnSchema.from_json(d) for d in doc)


def dump_schema(schema: Sequence[ColumnSchema], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"columns": [c.to_json() for c in schema]}, fh, indent=2)
        fh.write("\n")


def _empty_values(kind: str, n: int) -> np.ndarray:
    if kind in FLOAT_KINDS:
        return np.zeros(n, dtype=np.float64)
    return np.full(n, "", dtype=object)


@dataclass(frozen=True, eq=False)
class Frame:
    schema: tuple[ColumnSchema, ...]
    values: Mapping[str, np.ndarray]
    missing: Mapping[str, np.ndarray]

    def __post_init__(self):
        schema = validate_schema(self.schema)
        object.__setattr__(self, "schema", schema)
        lengths = set()
        values, missing = {}, {}
        for col in schema:
            if col.name not in self.values:
                raise SchemaError(f"no values for column {col.name!r}")
            v = np.asarray(self.values[col.name])
            v = v.astype(np.float64) if col.kind in FLOAT_KINDS else v.astype(object)
            m = self.missing.get(col.name)
            m = np.zeros(len(v), dtype=bool) if m is None else np.asarray(m, dtype=bool)
            if v.ndim != 1 or m.shape != v.shape:
                raise FormatError(f"column {col.name!r} has inconsistent shape")
            v = v.copy()
            m = m.copy()
            v.setflags(write=False)
            m.setflags(write=False)
            values[col.name], missing[col.name] = v, m
            lengths.add(len(v))
        if len(lengths) > 1:
            raise FormatError(f"columns have differing lengths {sorted(lengths)}")
        extra = set(self.values) - set(values)
        if extra:
            raise SchemaError(f"values given for unknown columns {sorted(extra)}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_columns(cls, schema: Sequence[ColumnSchema], data: Mapping[str, Sequence]) -> "Frame":
        """Build from plain lists where ``None`` (or NaN) marks a missing cell."""
        values, missing = {}, {}
        for col in schema:
            raw = list(data[col.name])
            miss = np.array([_is_missing_py(x) for x in raw], dtype=bool)
            v = _empty_values(col.kind, len(raw))
            for i, x in enumerate(raw):
                if not miss[i]:
                    v[i] = x
            values[col.name], missing[col.name] = v, miss
        return cls(tuple(schema), values, missing)

    @property
    def n_rows(self) -> int:
        if not self.schema:
            return 0
        return len(self.values[self.schema[0].name])

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def column(self, name: str) -> ColumnSchema:
        for c in self.schema:
            if c.name == name:
                return c
        raise SchemaError(f"unknown column {name!r}")

    @property
    def target_name(self) -> str:
        return next(c.name for c in self.schema if c.kind == TARGET)

    @property
    def identifier_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == IDENTIFIER]

    @property
    def feature_names(self) -> list[str]:
        """Modeling columns: everything except identifiers and the target."""
        return [c.name for c in self.schema if c.kind not in (IDENTIFIER, TARGET)]

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.schema if c.is_numeric]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.schema if c.kind == CATEGORICAL]

    def target(self) -> np.ndarray:
        name = self.target_name
        if self.missing[name].any():
            raise ParseError("target has missing cells", column=name)
        return self.values[name].astype(np.int64)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Dense float matrix of complete numeric columns."""
        cols = []
        for name in names:
            if self.column(name).kind not in FLOAT_KINDS:
                raise SchemaError(f"column {name!r} is not numeric")
            if self.missing[name].any():
                raise ParseError("column has missing cells", column=name)
            cols.append(self.values[name])
        if not cols:
            return np.zeros((self.n_rows, 0))
        return np.column_stack(cols)

    def take(self, rows: Sequence[int] | np.ndarray) -> "Frame":
        rows = np.asarray(rows, dtype=np.int64)
        return Frame(
            self.schema,
            {k: v[rows] for k, v in self.values.items()},
            {k: m[rows] for k, m in self.missing.items()},
        )

    def with_column(self, col: ColumnSchema, values, missing=None) -> "Frame":
        """Replace a column in place or append it at the end."""
        schema = [c for c in self.schema]
        names = self.names
        if col.name in names:
            schema[names.index(col.name)] = col
        else:
            schema.append(col)
        vals = dict(self.values)
        miss = dict(self.missing)
        vals[col.name] = np.asarray(values)
        miss[col.name] = np.zeros(len(values), dtype=bool) if missing is None else missing
        return Frame(tuple(schema), vals, miss)

    def replace_schema(self, schema: Sequence[ColumnSchema], values: Mapping, missing: Mapping) -> "Frame":
        return Frame(tuple(schema), values, missing)

    def equals(self, other: "Frame") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for name in self.names:
            m = self.missing[name]
            if not np.array_equal(m, other.missing[name]):
                return False
            if not np.array_equal(self.values[name][~m], other.values[name][~m]):
                return False
        return True

    def cell(self, row: int, name: str):
        return None if self.missing[name][row] else self.values[name][row]


def _is_missing_py(x) -> bool:
    return x is None or (isinstance(x, float) and math.isnan(x))


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", row=row, column=column) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite number {text!r}", row=row, column=column)
    return v


def read_csv(path: str | Path, schema: Sequence[ColumnSchema]) -> Frame:
    """Read an RFC-4180 CSV into a Frame typed by ``schema``.

    Row numbers in errors are 1-based data rows (the header is row 0).
    """
    schema = validate_schema(schema)
    by_name = {c.name: c for c in schema}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh, strict=True)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: missing header row") from None
        except csv.Error as exc:
            raise FormatError(f"{path}: {exc}") from None
        for h in header:
            if h not in by_name:
                raise SchemaError(f"unknown column {h!r} in {path}")
        if len(set(header)) != len(header):
            raise SchemaError(f"duplicate header names in {path}")
        absent = [c.name for c in schema if c.name not in header]
        if absent:
            raise SchemaError(f"columns missing from {path}: {absent}")

        cells: dict[str, list] = {c.name: [] for c in schema}
        miss: dict[str, list] = {c.name: [] for c in schema}
        try:
            for rowno, record in enumerate(reader, start=1):
                if len(record) != len(header):
                    raise FormatError(
                        f"{path}: row {rowno} has {len(record)} fields, expected {len(header)}"
                    )
                for name, text in zip(header, record):
                    col = by_name[name]
                    if text in MISSING_MARKERS:
                        miss[name].append(True)
                        cells[name].append(0.0 if col.kind in FLOAT_KINDS else "")
                        continue
                    miss[name].append(False)
                    cells[name].append(_convert(text, col, rowno))
        except csv.Error as exc:
            raise FormatError(f"{path}: {exc}") from None

    values = {}
    for col in schema:
        if col.kind in FLOAT_KINDS:
            values[col.name] = np.array(cells[col.name], dtype=np.float64)
        else:
            arr = np.empty(len(cells[col.name]), dtype=object)
            arr[:] = cells[col.name]
            values[col.name] = arr
    missing = {k: np.array(v, dtype=bool) for k, v in miss.items()}
    return Frame(schema, values, missing)


def _convert(text: str, col: ColumnSchema, rowno: int):
    if col.kind in NUMERIC_KINDS:
        return _parse_float(text, rowno, col.name)
    if col.kind == TARGET:
        v = _parse_float(text, rowno, col.name)
        if v not in (0.0, 1.0):
            raise ParseError(f"target value {text!r} not in {{0,1}}", row=rowno, column=col.name)
        return v
    if col.kind == CATEGORICAL:
        text = col.aliases.get(text, text)
        if text not in col.allowed_categories:
            raise ParseError(f"category {text!r} not allowed", row=rowno, column=col.name)
    return text


def format_number(v: float) -> str:
    """Shortest round-tripping text; integral values without a trailing ``.0``."""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def write_csv(frame: Frame, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(frame.names)
        cols = []
        for col in frame.schema:
            v, m = frame.values[col.name], frame.missing[col.name]
            if col.kind in FLOAT_KINDS:
                cols.append(["" if m[i] else format_number(v[i]) for i in range(frame.n_rows)])
            else:
                cols.append(["" if m[i] else v[i] for i in range(frame.n_rows)])
        for row in zip(*cols):
            w.writerow(row)


def _row_keys(frame: Frame, names: Iterable[str]) -> list[tuple]:
    parts = []
    for name in names:
        v, m = frame.values[name], frame.missing[name]
        parts.append([(True, None) if m[i] else (False, v[i]) for i in range(frame.n_rows)])
    return list(zip(*parts)) if parts else [()] * frame.n_rows


def deduplicate(frame: Frame) -> Frame:
    """Drop rows equal to an earlier row on every non-identifier column.

    Missingness is part of the comparison: a missing cell never equals an
    observed one.
    """
    keep, seen = [], set()
    compare = [c.name for c in frame.schema if c.kind != IDENTIFIER]
    for i, key in enumerate(_row_keys(frame, compare)):
        if key not in seen:
            seen.add(key)
            keep.append(i)
    if len(keep) == frame.n_rows:
        return frame
    return frame.take(keep)
