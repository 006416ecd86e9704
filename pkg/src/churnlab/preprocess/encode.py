"""One-hot encoding of categorical columns."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from churnlab.errors import DataError, SchemaError
from churnlab.tabular import CATEGORICAL, NUMERIC_DISCRETE, ColumnSchema, Frame

UNSEEN_ERROR = "error"
UNSEEN_ZEROS = "zeros"


@dataclass
class EncodingMap:
    categories: dict[str, list[str]] = field(default_factory=dict)
    indicators: dict[str, list[str]] = field(default_factory=dict)
    unseen: str = UNSEEN_ERROR

    def to_json(self) -> dict:
        return {"categories": self.categories, "indicators": self.indicators, "unseen": self.unseen}

    @classmethod
    def from_json(cls, doc: dict) -> "EncodingMap":
        return cls(
            {k: list(v) for k, v in doc["categories"].items()},
            {k: list(v) for k, v in doc["indicators"].items()},
            doc["unseen"],
        )


def one_hot(frame: Frame, unseen: str = UNSEEN_ERROR) -> tuple[EncodingMap, Frame]:
    """Replace each categorical column by one indicator per allowed category.

    Categories follow the schema's ``allowed_categories`` order, indicator
    columns take the source column's position.
    """
    if unseen not in (UNSEEN_ERROR, UNSEEN_ZEROS):
        raise ValueError(f"unknown unseen-category policy {unseen!r}")
    emap = EncodingMap(unseen=unseen)
    for col in frame.schema:
        if col.kind == CATEGORICAL:
            cats = list(col.allowed_categories)
            emap.categories[col.name] = cats
            emap.indicators[col.name] = [f"{col.name}_{c}" for c in cats]
    taken = [n for n in frame.names if n not in emap.categories]
    for names in emap.indicators.values():
        taken.extend(names)
    if len(set(taken)) != len(taken):
        dup = sorted({n for n in taken if taken.count(n) > 1})
        raise SchemaError(f"indicator names collide with existing columns: {dup}")
    return emap, apply_one_hot(emap, frame)


def apply_one_hot(emap: EncodingMap, frame: Frame) -> Frame:
    schema, values, missing = [], {}, {}
    for col in frame.schema:
        if col.name not in emap.categories:
            schema.append(col)
            values[col.name] = frame.values[col.name]
            missing[col.name] = frame.missing[col.name]
            continue
        if col.kind != CATEGORICAL:
            raise SchemaError(f"column {col.name!r} is not categorical")
        if frame.missing[col.name].any():
            row = int(np.flatnonzero(frame.missing[col.name])[0])
            raise DataError(f"categorical column {col.name!r} has missing cells (first at row {row})")
        cells = frame.values[col.name]
        cats = emap.categories[col.name]
        known = np.isin(cells, np.array(cats, dtype=object))
        if not known.all() and emap.unseen == UNSEEN_ERROR:
            bad = sorted(set(cells[~known]))
            raise DataError(f"unseen categories in {col.name!r}: {bad}")
        for cat, ind in zip(cats, emap.indicators[col.name]):
            schema.append(ColumnSchema(ind, NUMERIC_DISCRETE))
            values[ind] = (cells == cat).astype(np.float64)
            missing[ind] = np.zeros(frame.n_rows, dtype=bool)
    for name in emap.categories:
        if name not in frame.names:
            raise SchemaError(f"frame lacks categorical column {name!r}")
    return Frame(tuple(schema), values, missing)
