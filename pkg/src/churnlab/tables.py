"""Plain CSV tables (list of dicts) with round-tripping float text."""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Sequence

from churnlab.tabular import format_number


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return format_number(v) if v == v and abs(v) != float("inf") else repr(v)
    return str(v)


def write_rows(rows: Sequence[dict], path: str | Path, fieldnames: Sequence[str] | None = None) -> None:
    """Header from ``fieldnames`` or the first row; an empty table keeps just the header."""
    names = list(fieldnames) if fieldnames is not None else (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_cell(row.get(k)) for k in names])


def read_rows(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
