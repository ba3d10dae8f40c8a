"""Kaplan-Meier product-limit estimator used for model checking."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["StepSurvival", "km_fit"]


@dataclass(frozen=True)
class StepSurvival:
    """Right-continuous step survival curve with risk/event bookkeeping.

    ``times`` are the distinct event times in increasing order and
    ``survival[i]`` is the estimate just after ``times[i]``; the curve is 1
    before the first event time.
    """

    times: np.ndarray
    survival: np.ndarray
    n_risk: np.ndarray
    n_event: np.ndarray

    def evaluate(self, t) -> np.ndarray:
        """S(t) at arbitrary times (vectorized, right-continuous)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        padded = np.concatenate([[1.0], self.survival])
        return padded[idx]

    def write_csv(self, target, stratum: int | None = None, recurrence: int | None = None):
        own = isinstance(target, (str, Path))
        fh = open(target, "w", encoding="utf-8", newline="") if own else target
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "survival", "n_risk", "n_event", "stratum", "recurrence"])
            for i in range(len(self.times)):
                w.writerow(
                    [
                        f"{self.times[i]:.15g}",
                        f"{self.survival[i]:.15g}",
                        int(self.n_risk[i]),
                        int(self.n_event[i]),
                        "" if stratum is None else stratum,
                        "" if recurrence is None else recurrence,
                    ]
                )
        finally:
            if own:
                fh.close()


def km_fit(times, deltas) -> StepSurvival:
    """Product-limit estimate from right-censored times.

    Ties are grouped; an observation censored exactly at an event time stays
    in the risk set for that time (events before censorings).
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(deltas)
    if t.size == 0:
        raise ValueError("no observations")
    if t.shape != d.shape:
        raise ValueError("times and status flags must have equal length")
    if np.any(t <= 0):
        raise ValueError("times must be positive")
    if not np.isin(d, (0, 1)).all():
        raise ValueError("status flags must be 0 or 1")

    order = np.argsort(t, kind="stable")
    t, d = t[order], d[order].astype(int)
    event_times = np.unique(t[d == 1])
    n = t.size
    n_risk = np.empty(event_times.size, dtype=int)
    n_event = np.empty(event_times.size, dtype=int)
    for i, et in enumerate(event_times):
        n_risk[i] = np.sum(t >= et)
        n_event[i] = np.sum((t == et) & (d == 1))
    factors = 1.0 - n_event / n_risk
    survival = np.cumprod(factors)
    return StepSurvival(times=event_times, survival=survival, n_risk=n_risk, n_event=n_event)
