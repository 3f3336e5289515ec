"""Point and interval evaluation: MAE, RMSE, MAPE, MPIW, Winkler, coverage."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MAPE_FLOOR = 1e-8
"""Entries with |y| below this are excluded from MAPE (and counted)."""


class PointMetrics(NamedTuple):
    mae: float
    rmse: float
    mape: float
    n_skipped_mape: int


class IntervalMetrics(NamedTuple):
    mpiw: float
    winkler: float
    coverage: float


def point_metrics(y, y_hat) -> PointMetrics:
    """MAE, RMSE, and MAPE (as a fraction) over all aligned entries.

    MAPE skips entries with |y| < 1e-8 and reports how many were skipped;
    it is NaN if nothing remains.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(y_hat, dtype=np.float64).reshape(-1)
    if y.size == 0:
        raise ValueError("empty evaluation set")
    if y.shape != y_hat.shape:
        raise ValueError(f"{y.size} targets vs {y_hat.size} predictions")
    err = y_hat - y
    mae = float(np.abs(err).mean())
    rmse = float(np.sqrt((err * err).mean()))
    keep = np.abs(y) >= MAPE_FLOOR
    n_skipped = int(y.size - keep.sum())
    if keep.any():
        mape = float((np.abs(err[keep]) / np.abs(y[keep])).mean())
    else:
        mape = math.nan
    return PointMetrics(mae, rmse, mape, n_skipped)


def _interval_arrays(intervals) -> tuple:
    first = intervals[0] if len(intervals) else None
    if hasattr(first, "low"):
        low = np.array([iv.low for iv in intervals], dtype=np.float64)
        high = np.array([iv.high for iv in intervals], dtype=np.float64)
    else:
        arr = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
        low, high = arr[:, 0], arr[:, 1]
    return low, high


def interval_metrics(y, intervals, alpha: float) -> IntervalMetrics:
    """Mean width, mean Winkler score, and empirical coverage.

    Winkler per point: width, plus (2/alpha) times the miss distance when
    y falls outside the band. ``intervals`` may be objects with .low/.high
    or an (n, 2) array of (low, high) pairs.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    low, high = _interval_arrays(intervals)
    if y.size == 0:
        raise ValueError("empty evaluation set")
    if y.shape != low.shape:
        raise ValueError(f"{y.size} targets vs {low.size} intervals")
    if not (np.all(np.isfinite(low)) and np.all(np.isfinite(high))):
        raise ValueError("non-finite interval bounds")
    if np.any(low > high):
        raise ValueError("inverted interval in evaluation set")
    width = high - low
    penalty = (2.0 / alpha) * (np.maximum(low - y, 0.0) + np.maximum(y - high, 0.0))
    covered = (low <= y) & (y <= high)
    return IntervalMetrics(float(width.mean()),
                           float((width + penalty).mean()),
                           float(covered.mean()))


@dataclass
class MetricsReport:
    """Joint evaluation over every (sample, horizon, node) cell."""
    mae: float
    rmse: float
    mape: float
    mpiw: float
    winkler: float
    coverage: float
    target_met: bool
    n_points: int
    n_skipped_mape: int
    per_horizon: dict | None = field(default=None)

    FIELDS = ("mae", "rmse", "mape", "mpiw", "winkler", "coverage",
              "target_met", "n_points", "n_skipped_mape")

    def to_json(self) -> str:
        blob = {}
        for name in self.FIELDS:
            value = getattr(self, name)
            if isinstance(value, float) and math.isnan(value):
                value = None
            blob[name] = value
        if self.per_horizon is not None:
            blob["per_horizon"] = self.per_horizon
        return json.dumps(blob, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        blob = json.loads(text)
        kwargs = {name: blob[name] for name in cls.FIELDS}
        for name in ("mae", "rmse", "mape", "mpiw", "winkler", "coverage"):
            kwargs[name] = math.nan if kwargs[name] is None else float(kwargs[name])
        kwargs["per_horizon"] = blob.get("per_horizon")
        return cls(**kwargs)


def _flat_report(y, median, low, high, alpha: float):
    pm = point_metrics(y, median)
    im = interval_metrics(y, np.stack([np.asarray(low, dtype=np.float64).reshape(-1),
                                       np.asarray(high, dtype=np.float64).reshape(-1)],
                                      axis=1), alpha)
    return pm, im


def evaluate_forecast(y, median, low, high, alpha: float,
                      per_horizon: bool = False) -> MetricsReport:
    """Build the full report from aligned arrays of any common shape.

    With ``per_horizon`` and inputs of at least two axes, axis 1 is treated
    as the horizon and a per-step breakdown is attached.
    """
    y = np.asarray(y, dtype=np.float64)
    median = np.asarray(median, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    for name, arr in (("median", median), ("low", low), ("high", high)):
        if arr.shape != y.shape:
            raise ValueError(f"{name} shape {arr.shape} != targets {y.shape}")
    pm, im = _flat_report(y, median, low, high, alpha)
    breakdown = None
    if per_horizon and y.ndim >= 2:
        breakdown = {}
        for t in range(y.shape[1]):
            sl = (slice(None), t)
            pmt, imt = _flat_report(y[sl], median[sl], low[sl], high[sl], alpha)
            breakdown[str(t + 1)] = {
                "mae": pmt.mae, "rmse": pmt.rmse,
                "mape": None if math.isnan(pmt.mape) else pmt.mape,
                "mpiw": imt.mpiw, "winkler": imt.winkler,
                "coverage": imt.coverage,
            }
    return MetricsReport(
        mae=pm.mae, rmse=pm.rmse, mape=pm.mape,
        mpiw=im.mpiw, winkler=im.winkler, coverage=im.coverage,
        target_met=bool(im.coverage >= 1.0 - alpha),
        n_points=int(y.size), n_skipped_mape=pm.n_skipped_mape,
        per_horizon=breakdown)
