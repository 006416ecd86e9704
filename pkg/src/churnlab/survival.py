"""Kaplan-Meier product-limit estimation with Greenwood variance."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from churnlab.errors import DataError

Z_95 = 1.959963984540054  # standard normal 0.975 quantile


@dataclass(frozen=True)
class SurvivalSample:
    duration: float
    event: bool  # True: churned; False: right-censored

    def __post_init__(self):
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise DataError(f"duration must be finite and non-negative, got {self.duration}")


@dataclass
class SurvivalCurve:
    times: np.ndarray  # distinct event times, ascending
    at_risk: np.ndarray  # n_j, at risk just before t_j
    events: np.ndarray  # d_j
    survival: np.ndarray  # S(t_j)
    variance: np.ndarray  # Greenwood
    ci_low: np.ndarray
    ci_high: np.ndarray
    n_samples: int
    n_events: int

    @property
    def median_lifetime(self) -> float | None:
        """Smallest event time with S <= 0.5; None when not reached."""
        hit = np.flatnonzero(self.survival <= 0.5)
        return float(self.times[hit[0]]) if len(hit) else None

    def at(self, t: float) -> float:
        """Right-continuous step evaluation; 1 before the first event."""
        k = np.searchsorted(self.times, t, side="right")
        return 1.0 if k == 0 else float(self.survival[k - 1])

    def rows(self) -> list[dict]:
        return [
            {
                "time": float(self.times[j]),
                "n": int(self.at_risk[j]),
                "d": int(self.events[j]),
                "S": float(self.survival[j]),
                "variance": float(self.variance[j]),
                "ci_low": float(self.ci_low[j]),
                "ci_high": float(self.ci_high[j]),
            }
            for j in range(len(self.times))
        ]


def kaplan_meier(samples: Sequence[SurvivalSample] | None = None, *, durations=None, events=None) -> SurvivalCurve:
    """Product-limit estimate over the distinct event times.

    Censorings tied with events at the same time are still at risk for those
    events. The 95% band uses the log transform, ``S * exp(+-z * sqrt(sum d /
    (n (n - d))))``, clipped to [0, 1].
    """
    if samples is not None:
        durations = np.array([s.duration for s in samples], dtype=float)
        events = np.array([s.event for s in samples], dtype=bool)
    else:
        durations = np.asarray(durations, dtype=float)
        events = np.asarray(events).astype(bool)
    if len(durations) == 0:
        raise DataError("no survival samples")
    if len(durations) != len(events):
        raise DataError("durations and events differ in length")
    if np.any(~np.isfinite(durations)) or np.any(durations < 0):
        raise DataError("durations must be finite and non-negative")

    times = np.unique(durations[events])
    # at risk just before t: durations >= t
    sorted_d = np.sort(durations)
    at_risk = len(durations) - np.searchsorted(sorted_d, times, side="left")
    ev_sorted = np.sort(durations[events])
    d = np.searchsorted(ev_sorted, times, side="right") - np.searchsorted(ev_sorted, times, side="left")

    factors = 1.0 - d / at_risk
    surv = np.cumprod(factors)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(at_risk > d, d / (at_risk * (at_risk - d)), np.inf)
    greenwood = np.cumsum(terms)
    with np.errstate(invalid="ignore"):
        variance = np.where(surv > 0, surv**2 * greenwood, 0.0)
        spread = Z_95 * np.sqrt(greenwood)
        low = np.where(surv > 0, surv * np.exp(-spread), 0.0)
        high = np.where(surv > 0, surv * np.exp(spread), 0.0)
    return SurvivalCurve(
        times=times,
        at_risk=at_risk.astype(np.int64),
        events=d.astype(np.int64),
        survival=surv,
        variance=variance,
        ci_low=np.clip(low, 0.0, 1.0),
        ci_high=np.clip(high, 0.0, 1.0),
        n_samples=len(durations),
        n_events=int(events.sum()),
    )


def survival_summary(curve: SurvivalCurve, horizons: Sequence[float]) -> list[dict]:
    out = []
    for h in horizons:
        if h < 0:
            raise ValueError("horizons must be non-negative")
        out.append({"horizon": float(h), "S": curve.at(h)})
    return out


def kaplan_meier_by(durations, events, groups) -> dict[str, SurvivalCurve]:
    """One curve per group label (sorted by label)."""
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events).astype(bool)
    groups = np.asarray(groups)
    return {
        str(g): kaplan_meier(durations=durations[groups == g], events=events[groups == g])
        for g in sorted(set(groups.tolist()), key=str)
    }
