"""Dataset container, synthetic generation, CSV round-trip, splits, windows.

The synthetic generator composes, per user: a base level, a daily sinusoid,
an additive weekly modulation, a region offset, and Gaussian noise, clipped
at zero. Sinusoid phases are computed from step indices reduced modulo the
period, so a noise-free signal is bitwise periodic with period 7 * steps/day.
An optional shift multiplies the noise scale from a given step onward — the
same seed with and without the shift shares every other draw.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .graphs import NodeSet

DAY_MINUTES = 24 * 60


@dataclass(frozen=True)
class SyntheticSpec:
    n_users: int = 20
    n_regions: int = 4
    days: int = 14
    steps_per_day: int = 48
    noise: float = 0.05
    shift_at: int | None = None    # step index where the noise scale changes
    shift_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.n_users >= self.n_regions >= 1:
            raise ValueError(f"need n_users >= n_regions >= 1, got "
                             f"{self.n_users} and {self.n_regions}")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        if self.steps_per_day <= 0 or DAY_MINUTES % self.steps_per_day != 0:
            raise ValueError(f"steps_per_day must divide {DAY_MINUTES} minutes")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.shift_scale <= 0:
            raise ValueError("shift_scale must be positive")
        if self.shift_at is not None and self.shift_at < 0:
            raise ValueError("shift_at must be >= 0")

    @property
    def n_steps(self) -> int:
        return self.days * self.steps_per_day


@dataclass
class EnergyDataset:
    timestamps: list          # T datetimes, strictly increasing, fixed interval
    readings: np.ndarray      # (T, N) kWh, >= 0
    user_ids: list
    user_coords: np.ndarray   # (N, 2)
    region_of: np.ndarray     # (N,) indices into region_ids
    region_ids: list
    region_coords: np.ndarray  # (R, 2)

    def __post_init__(self):
        self.readings = np.asarray(self.readings, dtype=np.float64)
        self.user_coords = np.asarray(self.user_coords, dtype=np.float64)
        self.region_coords = np.asarray(self.region_coords, dtype=np.float64)
        self.region_of = np.asarray(self.region_of, dtype=np.int64)
        t, n = self.readings.shape
        if len(self.timestamps) != t:
            raise ValueError(f"{len(self.timestamps)} timestamps for {t} rows")
        if len(self.user_ids) != n or self.user_coords.shape != (n, 2):
            raise ValueError("user metadata does not match reading columns")
        if self.region_of.shape != (n,):
            raise ValueError("region_of must give one region per user")
        r = len(self.region_ids)
        if self.region_coords.shape != (r, 2):
            raise ValueError("region coordinate rows must match region ids")
        if self.region_of.min() < 0 or self.region_of.max() >= r:
            raise ValueError("region_of index out of range")
        if np.any(self.readings < 0):
            raise ValueError("negative reading")
        if t >= 2:
            step = self.timestamps[1] - self.timestamps[0]
            if step <= timedelta(0):
                raise ValueError("timestamps must be strictly increasing")
            for i in range(1, t):
                if self.timestamps[i] - self.timestamps[i - 1] != step:
                    raise ValueError(f"irregular timestamp spacing at index {i}")

    @property
    def n_steps(self) -> int:
        return self.readings.shape[0]

    @property
    def n_users(self) -> int:
        return self.readings.shape[1]

    @property
    def n_regions(self) -> int:
        return len(self.region_ids)

    @property
    def steps_per_day(self) -> int:
        if self.n_steps < 2:
            raise ValueError("cannot infer cadence from a single timestamp")
        step = self.timestamps[1] - self.timestamps[0]
        minutes = step.total_seconds() / 60.0
        if minutes <= 0 or DAY_MINUTES % minutes != 0:
            raise ValueError(f"cadence of {minutes} minutes does not tile a day")
        return int(DAY_MINUTES // minutes)

    def micro_nodes(self) -> NodeSet:
        return NodeSet(ids=tuple(self.user_ids), coords=self.user_coords,
                       level="micro", region_of=self.region_of)

    def macro_nodes(self) -> NodeSet:
        return NodeSet(ids=tuple(self.region_ids), coords=self.region_coords,
                       level="macro")


# -- synthetic generation -------------------------------------------------------

START = datetime(2018, 1, 1)  # a Monday, so weekday indices start at 0


def generate_synthetic(spec: SyntheticSpec) -> EnergyDataset:
    rng = np.random.default_rng(spec.seed)
    n, r, t = spec.n_users, spec.n_regions, spec.n_steps
    s = spec.steps_per_day

    region_coords = rng.uniform(0.0, 10.0, size=(r, 2))
    region_of = np.arange(n) % r  # round-robin keeps every region inhabited
    user_coords = region_coords[region_of] + rng.normal(0.0, 0.5, size=(n, 2))

    base = rng.uniform(1.6, 2.6, size=n)
    day_amp = rng.uniform(0.25, 0.55, size=n)
    day_phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
    week_amp = rng.uniform(0.25, 0.50, size=n)
    week_phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
    region_effect = rng.uniform(-0.2, 0.2, size=r)

    steps = np.arange(t)
    day_angle = 2.0 * np.pi * (steps % s) / s
    week_angle = 2.0 * np.pi * (steps % (7 * s)) / (7 * s)
    signal = (base
              + day_amp * np.sin(day_angle[:, None] + day_phase)
              + week_amp * np.sin(week_angle[:, None] + week_phase)
              + region_effect[region_of])

    noise = rng.normal(0.0, 1.0, size=(t, n)) * spec.noise
    if spec.shift_at is not None:
        noise[spec.shift_at:] *= spec.shift_scale

    step_minutes = DAY_MINUTES // s
    timestamps = [START + timedelta(minutes=step_minutes * i) for i in range(t)]
    return EnergyDataset(
        timestamps=timestamps,
        readings=np.clip(signal + noise, 0.0, None),
        user_ids=[f"u{i:03d}" for i in range(n)],
        user_coords=user_coords,
        region_of=region_of,
        region_ids=[f"r{i:02d}" for i in range(r)],
        region_coords=region_coords,
    )


# -- CSV round-trip -------------------------------------------------------------


def _fmt(value: float) -> str:
    return repr(float(value))


def write_csvs(dataset: EnergyDataset, readings_path, users_path, regions_path):
    with open(regions_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["region_id", "x", "y"])
        for rid, (x, y) in zip(dataset.region_ids, dataset.region_coords):
            w.writerow([rid, _fmt(x), _fmt(y)])
    with open(users_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "x", "y", "region_id"])
        for uid, (x, y), reg in zip(dataset.user_ids, dataset.user_coords,
                                    dataset.region_of):
            w.writerow([uid, _fmt(x), _fmt(y), dataset.region_ids[reg]])
    with open(readings_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "user_id", "kwh"])
        for i, ts in enumerate(dataset.timestamps):
            for j, uid in enumerate(dataset.user_ids):
                w.writerow([ts.isoformat(), uid, _fmt(dataset.readings[i, j])])


class CsvFormatError(ValueError):
    """A malformed input file; the message names the file and row."""


def _require_columns(fieldnames, required, path):
    missing = [c for c in required if c not in (fieldnames or [])]
    if missing:
        raise CsvFormatError(f"{path}: missing columns {missing}")


def load_csv(readings_path, users_path, regions_path) -> EnergyDataset:
    """Parse and cross-validate the three files; errors carry row numbers.

    Row numbers are 1-based file lines (the header is line 1).
    """
    region_ids, region_rows = [], []
    with open(regions_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ["region_id", "x", "y"], regions_path)
        for i, row in enumerate(reader, start=2):
            rid = row["region_id"]
            if rid in region_ids:
                raise CsvFormatError(f"{regions_path} row {i}: duplicate region {rid!r}")
            try:
                region_rows.append((float(row["x"]), float(row["y"])))
            except ValueError:
                raise CsvFormatError(f"{regions_path} row {i}: bad coordinate")
            region_ids.append(rid)
    if not region_ids:
        raise CsvFormatError(f"{regions_path}: no regions")
    region_index = {rid: k for k, rid in enumerate(region_ids)}

    user_ids, user_rows, region_of = [], [], []
    with open(users_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ["user_id", "x", "y", "region_id"],
                         users_path)
        for i, row in enumerate(reader, start=2):
            uid = row["user_id"]
            if uid in user_ids:
                raise CsvFormatError(f"{users_path} row {i}: duplicate user {uid!r}")
            if row["region_id"] not in region_index:
                raise CsvFormatError(f"{users_path} row {i}: unknown region "
                                     f"{row['region_id']!r}")
            try:
                user_rows.append((float(row["x"]), float(row["y"])))
            except ValueError:
                raise CsvFormatError(f"{users_path} row {i}: bad coordinate")
            user_ids.append(uid)
            region_of.append(region_index[row["region_id"]])
    if not user_ids:
        raise CsvFormatError(f"{users_path}: no users")
    user_index = {uid: k for k, uid in enumerate(user_ids)}

    timestamps = []
    rows_by_time = []  # per timestamp: per-user values, None until seen
    with open(readings_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, ["timestamp", "user_id", "kwh"],
                         readings_path)
        for i, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["timestamp"])
            except ValueError:
                raise CsvFormatError(f"{readings_path} row {i}: bad timestamp "
                                     f"{row['timestamp']!r}")
            if row["user_id"] not in user_index:
                raise CsvFormatError(f"{readings_path} row {i}: unknown user "
                                     f"{row['user_id']!r}")
            try:
                kwh = float(row["kwh"])
            except ValueError:
                raise CsvFormatError(f"{readings_path} row {i}: bad reading")
            if not math.isfinite(kwh):
                raise CsvFormatError(f"{readings_path} row {i}: non-finite reading")
            if kwh < 0:
                raise CsvFormatError(f"{readings_path} row {i}: negative reading {kwh}")
            if not timestamps or ts > timestamps[-1]:
                timestamps.append(ts)
                rows_by_time.append([None] * len(user_ids))
            elif ts < timestamps[-1]:
                raise CsvFormatError(f"{readings_path} row {i}: non-monotone "
                                     f"timestamp {ts.isoformat()}")
            j = user_index[row["user_id"]]
            if rows_by_time[-1][j] is not None:
                raise CsvFormatError(f"{readings_path} row {i}: duplicate reading "
                                     f"for {row['user_id']!r} at {ts.isoformat()}")
            rows_by_time[-1][j] = kwh
    if not timestamps:
        raise CsvFormatError(f"{readings_path}: no readings")
    for k, values in enumerate(rows_by_time):
        holes = [user_ids[j] for j, v in enumerate(values) if v is None]
        if holes:
            raise CsvFormatError(f"{readings_path}: missing reading for "
                                 f"{holes[0]!r} at {timestamps[k].isoformat()}")
    if len(timestamps) >= 3:
        step = timestamps[1] - timestamps[0]
        for k in range(1, len(timestamps)):
            if timestamps[k] - timestamps[k - 1] != step:
                raise CsvFormatError(f"{readings_path}: gap before "
                                     f"{timestamps[k].isoformat()}")

    return EnergyDataset(
        timestamps=timestamps,
        readings=np.array(rows_by_time, dtype=np.float64),
        user_ids=user_ids,
        user_coords=np.array(user_rows, dtype=np.float64),
        region_of=np.array(region_of, dtype=np.int64),
        region_ids=region_ids,
        region_coords=np.array(region_rows, dtype=np.float64),
    )


# -- chronological splits --------------------------------------------------------


@dataclass(frozen=True)
class SplitFractions:
    train: float = 0.6
    calibration: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        parts = (self.train, self.calibration, self.test)
        if any(p <= 0 for p in parts):
            raise ValueError("split fractions must be positive")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(parts)}, not 1")


def split_bounds(n_steps: int, fractions: SplitFractions) -> tuple:
    """Chronological (train, calibration, test) index ranges tiling [0, T)."""
    n_tr = int(round(n_steps * fractions.train))
    n_ca = int(round(n_steps * fractions.calibration))
    n_tr = min(max(n_tr, 1), n_steps - 2)
    n_ca = min(max(n_ca, 1), n_steps - n_tr - 1)
    return (0, n_tr), (n_tr, n_tr + n_ca), (n_tr + n_ca, n_steps)


# -- sliding windows --------------------------------------------------------------


@dataclass
class WindowSample:
    window: np.ndarray   # (T_in, N)
    target: np.ndarray   # (T_out, N)
    last_ts: datetime    # timestamp of the last input step
    first_target: int    # index of the first target step in the full series


def window_samples(dataset: EnergyDataset, window: int, horizon: int,
                   bounds: tuple) -> list:
    """Samples whose targets lie entirely inside [bounds); inputs may reach back.

    A sample with first target index f uses inputs [f-window, f) and targets
    [f, f+horizon); eligibility needs f >= window and f+horizon <= bounds[1].
    """
    lo, hi = bounds
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    out = []
    for f in range(max(lo, window), hi - horizon + 1):
        out.append(WindowSample(
            window=dataset.readings[f - window:f],
            target=dataset.readings[f:f + horizon],
            last_ts=dataset.timestamps[f - 1],
            first_target=f,
        ))
    return out


def persistence_forecast(dataset: EnergyDataset, samples, season: int) -> np.ndarray:
    """Seasonal-lag baseline: predict y[t] as y[t - season]. (B, T_out, N)."""
    preds = []
    for s in samples:
        f = s.first_target
        horizon = s.target.shape[0]
        if f + horizon - 1 - season < 0:
            raise ValueError(f"sample at {f} has no observation one season back")
        preds.append(dataset.readings[f - season:f - season + horizon])
    return np.stack(preds)
