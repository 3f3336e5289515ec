"""Sequential conformalized quantile regression.

A FIFO window of nonconformity scores, sized to the calibration set, turns
raw quantile forecasts into finite-sample prediction intervals. In rolling
mode each revealed observation is scored, the oldest score retires, and the
window adapts to drift; in static mode the calibration window is reused
unchanged for the whole stream.

The conformal quantile index is computed in exact rational arithmetic so the
ceil never suffers a float round-off (e.g. 99 scores at alpha=0.1 must index
the 90th, not the 91st).
"""

from __future__ import annotations

import json
import math
import warnings
from collections import deque
from dataclasses import dataclass
from fractions import Fraction


class SmallCalibrationWarning(UserWarning):
    """Window too small for the requested coverage level."""


@dataclass(frozen=True)
class PredictionInterval:
    low: float
    high: float
    clamped: bool = False  # inverted band collapsed to its midpoint

    def __post_init__(self):
        if self.low > self.high:
            raise ValueError(f"interval inverted: [{self.low}, {self.high}]")

    @property
    def width(self) -> float:
        return self.high - self.low

    def covers(self, y: float) -> bool:
        return self.low <= y <= self.high


class NonconformityWindow:
    """Fixed-capacity FIFO of scores, oldest first."""

    def __init__(self, scores, capacity: int | None = None):
        scores = [float(s) for s in scores]
        if capacity is None:
            capacity = len(scores)
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        if len(scores) != capacity:
            raise ValueError(f"{len(scores)} scores for capacity {capacity}")
        for s in scores:
            if not math.isfinite(s):
                raise ValueError(f"non-finite score {s}")
        self._scores = deque(scores, maxlen=capacity)
        self.cursor = 0  # stream steps consumed since calibration

    @property
    def capacity(self) -> int:
        return self._scores.maxlen

    def __len__(self) -> int:
        return len(self._scores)

    @property
    def scores(self) -> list:
        return list(self._scores)

    def push(self, score: float) -> None:
        """Add the newest score; the oldest falls off the front."""
        score = float(score)
        if not math.isfinite(score):
            raise ValueError(f"non-finite score {score}")
        self._scores.append(score)
        self.cursor += 1

    # -- checkpointing (bit-exact: JSON floats round-trip via repr) ------------

    def to_json(self) -> str:
        return json.dumps({"capacity": self.capacity, "cursor": self.cursor,
                           "scores": self.scores})

    @classmethod
    def from_json(cls, text: str) -> "NonconformityWindow":
        blob = json.loads(text)
        window = cls(blob["scores"], blob["capacity"])
        window.cursor = int(blob["cursor"])
        return window


def monotone_repair(q_lo: float, q_up: float) -> tuple:
    """Swap an inverted quantile pair so scoring stays well-defined."""
    return (q_up, q_lo) if q_lo > q_up else (q_lo, q_up)


def nonconformity(q_lo: float, q_up: float, y: float) -> float:
    """max(q_lo - y, y - q_up): negative iff y lies strictly inside."""
    for v in (q_lo, q_up, y):
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v}")
    return max(q_lo - y, y - q_up)


def conformal_quantile(window: NonconformityWindow, alpha: float) -> float:
    """The ceil((1-alpha)(1+1/n) * n)-th smallest score.

    The index is evaluated as ceil((1-alpha)(n+1)) in exact rational
    arithmetic. When the level exceeds 1 (window too small), the maximum
    score is returned and a SmallCalibrationWarning is raised.
    """
    n = len(window)
    if n == 0:
        raise ValueError("empty nonconformity window")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    k = math.ceil((1 - Fraction(alpha)) * (n + 1))
    ordered = sorted(window.scores)
    if k > n:
        warnings.warn(f"window of {n} scores cannot reach level "
                      f"(1-{alpha})(1+1/{n}); returning the max score",
                      SmallCalibrationWarning, stacklevel=2)
        return ordered[-1]
    return ordered[k - 1]


def construct_interval(q_lo: float, q_up: float, Q: float) -> PredictionInterval:
    """[q_lo - Q, q_up + Q]; a would-be inverted band clamps to its midpoint."""
    for v in (q_lo, q_up, Q):
        if not math.isfinite(v):
            raise ValueError(f"non-finite input {v}")
    if q_lo > q_up:
        raise ValueError(f"quantile pair inverted: {q_lo} > {q_up}")
    low, high = q_lo - Q, q_up + Q
    if low > high:
        mid = (q_lo + q_up) / 2.0
        return PredictionInterval(mid, mid, clamped=True)
    return PredictionInterval(low, high)


def calibrate(quantile_pairs, targets) -> NonconformityWindow:
    """Score held-out predictions in time order; window capacity = set size."""
    pairs = [monotone_repair(float(lo), float(up)) for lo, up in quantile_pairs]
    targets = [float(y) for y in targets]
    if not pairs:
        raise ValueError("calibration set is empty")
    if len(pairs) != len(targets):
        raise ValueError(f"{len(pairs)} predictions vs {len(targets)} targets")
    return NonconformityWindow(
        [nonconformity(lo, up, y) for (lo, up), y in zip(pairs, targets)])


def scqr_stream(window: NonconformityWindow, stream, alpha: float,
                update: bool = True, timestamps=None) -> list:
    """Emit one interval per stream element (q_lo, q_up, y), oldest first.

    Each step computes Q from the current window and constructs the interval
    BEFORE looking at y; with ``update`` the revealed y is then scored, the
    oldest score retires, and the window length stays fixed. ``update=False``
    is the static variant: the calibration window serves the whole stream.
    ``timestamps``, when given, must be strictly increasing.
    """
    stream = list(stream)
    if timestamps is not None:
        timestamps = list(timestamps)
        if len(timestamps) != len(stream):
            raise ValueError(f"{len(timestamps)} timestamps for "
                             f"{len(stream)} stream elements")
        for i in range(1, len(timestamps)):
            if timestamps[i] <= timestamps[i - 1]:
                raise ValueError(f"out-of-order timestamp at position {i}: "
                                 f"{timestamps[i]} follows {timestamps[i - 1]}")
    out = []
    for q_lo, q_up, y in stream:
        q_lo, q_up = monotone_repair(float(q_lo), float(q_up))
        Q = conformal_quantile(window, alpha)
        out.append(construct_interval(q_lo, q_up, Q))
        if update:
            window.push(nonconformity(q_lo, q_up, float(y)))
    return out
