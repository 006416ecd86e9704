"""RFM quintile scoring and rule-based segment assignment."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from churnlab.errors import DataError
from churnlab.tabular import Frame

SEGMENT_LABELS = ("Best", "Loyal", "Promising", "New", "Lost Potential", "Lost")
FALLBACK_LABEL = "Other"


@dataclass(frozen=True)
class RfmMapping:
    recency: str = "DaySinceLastOrder"
    frequency: str = "OrderCount"
    monetary: str = "CashbackAmount"
    customer_id: str | None = "CustomerID"


@dataclass
class RfmRecord:
    customer_id: str
    recency_raw: float
    frequency_raw: float
    monetary_raw: float
    r_score: int
    f_score: int
    m_score: int
    segment: str = ""


@dataclass(frozen=True)
class SegmentRule:
    """Inclusive score bounds; an absent bound leaves that score unconstrained."""

    label: str
    bounds: dict = field(default_factory=dict, hash=False)  # e.g. {"r_min": 4, "f_max": 2}

    def matches(self, r: int, f: int, m: int) -> bool:
        scores = {"r": r, "f": f, "m": m}
        for key, bound in self.bounds.items():
            which, side = key.split("_")
            if side == "min" and scores[which] < bound:
                return False
            if side == "max" and scores[which] > bound:
                return False
        return True

    def to_json(self) -> dict:
        return {"label": self.label, **self.bounds}

    @classmethod
    def from_json(cls, doc: dict) -> "SegmentRule":
        allowed = {f"{s}_{b}" for s in "rfm" for b in ("min", "max")}
        bounds = {k: int(v) for k, v in doc.items() if k != "label"}
        bad = set(bounds) - allowed
        if bad:
            raise DataError(f"unknown rule bounds {sorted(bad)} for segment {doc.get('label')!r}")
        return cls(doc["label"], bounds)


DEFAULT_RULES = (
    SegmentRule("Best", {"r_min": 4, "f_min": 4, "m_min": 4}),
    SegmentRule("Loyal", {"f_min": 4}),
    SegmentRule("Promising", {"r_min": 4, "f_max": 2, "m_min": 3}),
    SegmentRule("New", {"r_min": 4, "f_max": 2}),
    SegmentRule("Lost", {"r_max": 2, "f_max": 2}),
    SegmentRule("Lost Potential", {"r_max": 2}),
    SegmentRule(FALLBACK_LABEL, {}),
)


def load_rules(path: str | Path) -> tuple[SegmentRule, ...]:
    with open(path, encoding="utf-8") as fh:
        rules = tuple(SegmentRule.from_json(d) for d in json.load(fh))
    if not rules:
        raise DataError("rules file is empty")
    return rules


def quintile_scores(values) -> tuple[np.ndarray, bool]:
    """Scores 1-5 from cut points at the 20/40/60/80th percentiles.

    Cut points are order statistics (no interpolation), so scores depend on
    ranks only; a value equal to a cut point takes the lower bucket. A
    constant column scores 3 everywhere and is reported as degenerate.
    """
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return np.zeros(0, dtype=np.int64), False
    if np.all(values == values[0]):
        return np.full(len(values), 3, dtype=np.int64), True
    cuts = np.percentile(values, [20, 40, 60, 80], method="lower")
    return 1 + (values[:, None] > cuts[None, :]).sum(axis=1), False


@dataclass
class RfmResult:
    records: list[RfmRecord]
    degenerate: list[str]  # which of recency/frequency/monetary were constant
    mapping: RfmMapping


def rfm_score(frame: Frame, mapping: RfmMapping = RfmMapping()) -> RfmResult:
    cols = {"recency": mapping.recency, "frequency": mapping.frequency, "monetary": mapping.monetary}
    raw = {}
    for role, name in cols.items():
        if not frame.column(name).is_numeric:
            raise DataError(f"RFM {role} column {name!r} is not numeric")
        if frame.missing[name].any():
            raise DataError(f"RFM {role} column {name!r} has missing cells")
        raw[role] = frame.values[name]
    r_q, r_deg = quintile_scores(raw["recency"])
    f_s, f_deg = quintile_scores(raw["frequency"])
    m_s, m_deg = quintile_scores(raw["monetary"])
    # recent (small recency) scores high
    r_s = r_q if r_deg else 6 - r_q
    if mapping.customer_id and mapping.customer_id in frame.names:
        ids = [str(v) for v in frame.values[mapping.customer_id]]
    else:
        ids = [str(i) for i in range(frame.n_rows)]
    records = [
        RfmRecord(
            ids[i],
            float(raw["recency"][i]),
            float(raw["frequency"][i]),
            float(raw["monetary"][i]),
            int(r_s[i]),
            int(f_s[i]),
            int(m_s[i]),
        )
        for i in range(frame.n_rows)
    ]
    degenerate = [role for role, flag in zip(cols, (r_deg, f_deg, m_deg)) if flag]
    return RfmResult(records, degenerate, mapping)


def assign_segment(record: RfmRecord, rules: Sequence[SegmentRule] = DEFAULT_RULES) -> str:
    """First matching rule wins; ``Other`` when nothing fires."""
    for rule in rules:
        if rule.matches(record.r_score, record.f_score, record.m_score):
            return rule.label
    return FALLBACK_LABEL


def assign_segments(records: Sequence[RfmRecord], rules: Sequence[SegmentRule] = DEFAULT_RULES) -> None:
    for rec in records:
        rec.segment = assign_segment(rec, rules)


def segment_summary(
    records: Sequence[RfmRecord], churn: Sequence[float] | None = None, label_order: Sequence[str] | None = None
) -> list[dict]:
    """Per-segment counts, mean raw R/F/M and churn rate (omitted without a target)."""
    if not records:
        raise ValueError("no records")
    labels = np.array([r.segment for r in records])
    order = list(label_order or [r.label for r in DEFAULT_RULES])
    order += sorted(set(labels) - set(order))
    churn_arr = None if churn is None else np.asarray(churn, dtype=float)
    out = []
    for label in order:
        mask = labels == label
        if not mask.any():
            continue
        sel = [r for r, m in zip(records, mask) if m]
        row = {
            "segment": label,
            "count": int(mask.sum()),
            "share": float(mask.mean()),
            "mean_recency": float(np.mean([r.recency_raw for r in sel])),
            "mean_frequency": float(np.mean([r.frequency_raw for r in sel])),
            "mean_monetary": float(np.mean([r.monetary_raw for r in sel])),
            "mean_r_score": float(np.mean([r.r_score for r in sel])),
            "mean_f_score": float(np.mean([r.f_score for r in sel])),
            "mean_m_score": float(np.mean([r.m_score for r in sel])),
        }
        if churn_arr is not None:
            row["churn_rate"] = float(churn_arr[mask].mean())
            row["churners"] = int(churn_arr[mask].sum())
        else:
            row["churn_rate"] = "n/a (no target column)"
        out.append(row)
    return out


def box_stats(values) -> dict[str, float]:
    """Five-number summary with 1.5 IQR whiskers (linear percentiles).

    Whiskers end at the most extreme data value inside the fences, but never
    inside the box, which interpolated quartiles could otherwise cause.
    """
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo = min(float(v[v >= q1 - 1.5 * iqr].min()), float(q1))
    hi = max(float(v[v <= q3 + 1.5 * iqr].max()), float(q3))
    return {"whisker_low": lo, "q1": float(q1), "median": float(med), "q3": float(q3), "whisker_high": hi}


def box_plot_rows(records: Sequence[RfmRecord]) -> list[dict]:
    """Per segment and metric box statistics of the raw R/F/M values."""
    order = [r.label for r in DEFAULT_RULES]
    present = {r.segment for r in records}
    order = [s for s in order if s in present] + sorted(present - set(order))
    rows = []
    for metric, attr in (("recency", "recency_raw"), ("frequency", "frequency_raw"), ("monetary", "monetary_raw")):
        for seg in order:
            vals = [getattr(r, attr) for r in records if r.segment == seg]
            rows.append({"metric": metric, "segment": seg, "count": len(vals), **box_stats(vals)})
    return rows


def record_rows(records: Sequence[RfmRecord]) -> list[dict]:
    return [
        {
            "customer_id": r.customer_id,
            "recency_raw": r.recency_raw,
            "frequency_raw": r.frequency_raw,
            "monetary_raw": r.monetary_raw,
            "r_score": r.r_score,
            "f_score": r.f_score,
            "m_score": r.m_score,
            "segment": r.segment,
        }
        for r in records
    ]
