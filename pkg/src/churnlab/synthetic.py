"""Synthetic stand-in for the e-commerce churn table.

Same 20 columns, category spellings (including the raw aliases), missing-cell
pattern and duplicate rows as the public dataset, with invented marginals and
an invented churn mechanism. Useful for exercising the pipeline end to end; it
says nothing about the real data.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from churnlab.tabular import format_number

COLUMNS = [
    "CustomerID", "Churn", "Tenure", "PreferredLoginDevice", "CityTier", "WarehouseToHome",
    "PreferredPaymentMode", "Gender", "HourSpendOnApp", "NumberOfDeviceRegistered",
    "PreferedOrderCat", "SatisfactionScore", "MaritalStatus", "NumberOfAddress", "Complain",
    "OrderAmountHikeFromLastYear", "CouponUsed", "OrderCount", "DaySinceLastOrder", "CashbackAmount",
]  # fmt: skip

MISSING_RATES = {
    "Tenure": 0.047,
    "WarehouseToHome": 0.045,
    "HourSpendOnApp": 0.045,
    "OrderAmountHikeFromLastYear": 0.047,
    "CouponUsed": 0.046,
    "OrderCount": 0.046,
    "DaySinceLastOrder": 0.055,
}


def _choice(rng, labels, probs, n):
    return np.array(labels, dtype=object)[rng.choice(len(labels), size=n, p=probs)]


def generate(n_rows: int = 5630, seed: int = 0, duplicate_fraction: float = 0.1) -> list[dict]:
    rng = np.random.default_rng(seed)
    n_unique = n_rows - int(round(duplicate_fraction * n_rows))
    n = n_unique
    tenure = np.minimum(np.floor(rng.exponential(10.0, n)), 61)
    complain = (rng.random(n) < 0.28).astype(float)
    n_address = np.clip(np.round(rng.lognormal(1.1, 0.6, n)), 1, 22)
    cashback = np.round(np.clip(rng.normal(120 + 2.5 * tenure, 35), 0, 325), 2)
    satisfaction = rng.integers(1, 6, n).astype(float)
    days_since = np.clip(np.floor(rng.exponential(4.5, n)), 0, 46)
    warehouse = np.clip(np.round(rng.lognormal(2.6, 0.45, n)), 5, 36)
    order_count = np.clip(np.round(rng.lognormal(0.7, 0.7, n)), 1, 16)
    coupon = np.minimum(np.floor(rng.random(n) * (order_count + 1)), 16)
    hike = np.round(rng.uniform(11, 26, n))
    hours = np.clip(np.round(rng.normal(2.9, 0.7, n)), 0, 5)
    devices = np.clip(np.round(rng.normal(3.7, 1.0, n)), 1, 6)
    city = _choice(rng, [1.0, 2.0, 3.0], [0.65, 0.05, 0.30], n).astype(float)
    marital = _choice(rng, ["Married", "Single", "Divorced"], [0.53, 0.32, 0.15], n)

    score = (
        -1.2
        - 0.18 * tenure
        + 1.6 * complain
        + 0.12 * n_address
        - 0.008 * (cashback - 150)
        + 0.15 * (satisfaction - 3)
        - 0.05 * days_since
        + 0.03 * (warehouse - 15)
        + 0.5 * (marital == "Single")
    )
    churn = (rng.random(n) < 1.0 / (1.0 + np.exp(-score))).astype(float)

    cols = {
        "Churn": churn,
        "Tenure": tenure,
        "PreferredLoginDevice": _choice(rng, ["Mobile Phone", "Phone", "Computer"], [0.5, 0.21, 0.29], n),
        "CityTier": city,
        "WarehouseToHome": warehouse,
        "PreferredPaymentMode": _choice(
            rng,
            ["Debit Card", "Credit Card", "CC", "E wallet", "UPI", "Cash on Delivery", "COD"],
            [0.41, 0.24, 0.05, 0.11, 0.07, 0.03, 0.09],
            n,
        ),
        "Gender": _choice(rng, ["Male", "Female"], [0.6, 0.4], n),
        "HourSpendOnApp": hours,
        "NumberOfDeviceRegistered": devices,
        "PreferedOrderCat": _choice(
            rng,
            ["Laptop & Accessory", "Mobile Phone", "Mobile", "Fashion", "Grocery", "Others"],
            [0.36, 0.23, 0.14, 0.15, 0.07, 0.05],
            n,
        ),
        "SatisfactionScore": satisfaction,
        "MaritalStatus": marital,
        "NumberOfAddress": n_address,
        "Complain": complain,
        "OrderAmountHikeFromLastYear": hike,
        "CouponUsed": coupon,
        "OrderCount": order_count,
        "DaySinceLastOrder": days_since,
        "CashbackAmount": cashback,
    }
    rows = []
    for i in range(n):
        row = {}
        for name in COLUMNS[1:]:
            v = cols[name][i]
            if name in MISSING_RATES and rng.random() < MISSING_RATES[name]:
                row[name] = ""
            elif isinstance(v, str):
                row[name] = v
            else:
                row[name] = format_number(float(v))
        rows.append(row)
    dup_sources = rng.integers(0, n, size=n_rows - n)
    rows.extend(dict(rows[j]) for j in dup_sources)
    order = rng.permutation(len(rows))
    rows = [rows[j] for j in order]
    for i, row in enumerate(rows):
        row["CustomerID"] = str(50001 + i)
    return rows


def write_synthetic_csv(path: str | Path, n_rows: int = 5630, seed: int = 0) -> Path:
    path = Path(path)
    rows = generate(n_rows, seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return path
