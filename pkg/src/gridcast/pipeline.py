"""generate / train / calibrate / predict / evaluate / e2e command bodies.

Artifacts land in the configured output directory:
  config.yaml    resolved configuration (provenance)
  data/*.csv     readings, users, regions
  model.npz      trained checkpoint
  scaler.json    train-era standardization constants
  loss_trace.csv per-step training loss (standardized units)
  calibration.json  nonconformity window(s)
  intervals.csv  per-(timestamp, user) conformal intervals, horizon-1 stream
  report.json    evaluation metrics

The model trains and predicts on standardized readings (train-era global
mean/std); quantiles are mapped back to the signal's units before
calibration, interval construction, and every artifact that leaves the
model. Standardization keeps the bounded recurrent state and the
zero-initialized head in the regime where a few hundred optimizer steps
suffice, and the constants travel with the run as scaler.json.

Interval streaming is one-step-ahead: each test timestamp is predicted from
the window ending just before it, the conformal adjustment is applied, and
(in rolling mode) the revealed observation updates the score window before
the next step. The model's longer horizons feed training and the in-memory
evaluation API; the CSV keeps one row per (timestamp, user).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .config import PipelineConfig, dump_config
from .data import (
    EnergyDataset,
    generate_synthetic,
    load_csv,
    split_bounds,
    window_samples,
    write_csvs,
)
from .graphs import batch_macro_channel, build_diffusion
from .metrics import evaluate_forecast
from .model import GraphForecaster
from .scqr import (
    NonconformityWindow,
    calibrate,
    conformal_quantile,
    construct_interval,
    monotone_repair,
    nonconformity,
)
from .training import train

VERBS = ("generate", "train", "calibrate", "predict", "evaluate", "e2e")


def _fmt(value: float) -> str:
    return repr(float(value))


def _artifact(config: PipelineConfig, name: str) -> Path:
    return config.out_dir / name


def _data_paths(config: PipelineConfig) -> dict:
    d = config.data_dir
    return {"readings": d / "readings.csv", "users": d / "users.csv",
            "regions": d / "regions.csv"}


def _prepare_outdir(config: PipelineConfig) -> None:
    config.out_dir.mkdir(parents=True, exist_ok=True)
    dump_config(config, _artifact(config, "config.yaml"))


def _require(path: Path, role: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{role} not found: {path}")
    return path


def _load_dataset(config: PipelineConfig) -> EnergyDataset:
    paths = _data_paths(config)
    for role, p in paths.items():
        _require(p, f"{role} file")
    return load_csv(paths["readings"], paths["users"], paths["regions"])


def _build_model(config: PipelineConfig, dataset: EnergyDataset) -> GraphForecaster:
    diffusion = build_diffusion(dataset.micro_nodes(), config.graph.sigma2,
                                config.graph.threshold, config.graph.k_hops)
    model_cfg = config.model_config(dataset.n_users, dataset.steps_per_day)
    return GraphForecaster(model_cfg, diffusion, np.random.default_rng(config.seed))


def _macro_for(config: PipelineConfig, dataset: EnergyDataset,
               windows: np.ndarray) -> np.ndarray:
    if config.flags.disable_macro:
        return np.zeros_like(windows)
    return batch_macro_channel(windows, dataset.region_of, dataset.n_regions)


def fit_scaler(dataset: EnergyDataset, bounds: tuple) -> tuple:
    """Global (mean, std) over one era's readings; std floored for flat data."""
    lo, hi = bounds
    era = dataset.readings[lo:hi]
    if era.size == 0:
        raise ValueError(f"era {bounds} holds no readings to fit a scaler on")
    mean = float(era.mean())
    std = float(era.std())
    return mean, (std if std > 0.0 else 1.0)


def scale_samples(samples, mean: float, std: float) -> list:
    """Window samples -> (window, target, last_ts) tuples in scaled units."""
    return [((s.window - mean) / std, (s.target - mean) / std, s.last_ts)
            for s in samples]


def _save_scaler(config: PipelineConfig, mean: float, std: float) -> Path:
    path = _artifact(config, "scaler.json")
    path.write_text(json.dumps({"mean": mean, "std": std}), encoding="utf-8")
    return path


def _load_scaler(config: PipelineConfig) -> tuple:
    path = _require(_artifact(config, "scaler.json"), "scaler file")
    blob = json.loads(path.read_text(encoding="utf-8"))
    return float(blob["mean"]), float(blob["std"])


# -- commands -------------------------------------------------------------------


def cmd_generate(config: PipelineConfig) -> dict:
    dataset = generate_synthetic(config.synthetic_spec())
    config.data_dir.mkdir(parents=True, exist_ok=True)
    paths = _data_paths(config)
    write_csvs(dataset, paths["readings"], paths["users"], paths["regions"])
    return {"command": "generate",
            "n_steps": dataset.n_steps, "n_users": dataset.n_users,
            **{k: str(v) for k, v in paths.items()}}


def cmd_train(config: PipelineConfig) -> dict:
    dataset = _load_dataset(config)
    train_bounds = split_bounds(dataset.n_steps, config.split_fractions())[0]
    samples = window_samples(dataset, config.train.window,
                             config.train.horizon, train_bounds)
    if not samples:
        raise ValueError(
            f"training era {train_bounds} too short for window "
            f"{config.train.window} + horizon {config.train.horizon}")
    mean, std = fit_scaler(dataset, train_bounds)
    _save_scaler(config, mean, std)
    model = _build_model(config, dataset)
    region_of = None if config.flags.disable_macro else dataset.region_of
    trace = train(scale_samples(samples, mean, std), model,
                  config.train_config(), config.loss_config(),
                  region_of=region_of, n_regions=dataset.n_regions,
                  log_path=_artifact(config, "loss_trace.csv"))
    checkpoint = _artifact(config, "model.npz")
    model.save(checkpoint)
    return {"command": "train", "checkpoint": str(checkpoint),
            "steps": len(trace), "scaler": {"mean": mean, "std": std},
            "first_loss": trace[0][2] if trace else None,
            "final_loss": trace[-1][2] if trace else None}


def _stream_quantiles(config: PipelineConfig, dataset: EnergyDataset,
                      model: GraphForecaster, bounds: tuple,
                      scaler: tuple) -> dict:
    """Horizon-1 tracks for every target step in [bounds): (T_era, N) arrays.

    Inputs are standardized with the training-era scaler; the returned
    quantile tracks are already mapped back to the signal's units.
    """
    samples = window_samples(dataset, config.train.window, 1, bounds)
    if not samples:
        raise ValueError(f"era {bounds} yields no prediction windows")
    mean, std = scaler
    lows, meds, highs = [], [], []
    b = config.train.batch_size
    for lo in range(0, len(samples), b):
        chunk = samples[lo:lo + b]
        xs = (np.stack([s.window for s in chunk]) - mean) / std
        macro = _macro_for(config, dataset, xs)
        pred = model.forward(xs, macro, [s.last_ts for s in chunk])
        lows.append(pred.low.data[:, 0, :] * std + mean)
        meds.append(pred.median.data[:, 0, :] * std + mean)
        highs.append(pred.high.data[:, 0, :] * std + mean)
    first = [s.first_target for s in samples]
    return {
        "low": np.concatenate(lows), "median": np.concatenate(meds),
        "high": np.concatenate(highs),
        "y": dataset.readings[first],
        "times": [dataset.timestamps[f] for f in first],
    }


def cmd_calibrate(config: PipelineConfig) -> dict:
    dataset = _load_dataset(config)
    model = GraphForecaster.load(_require(_artifact(config, "model.npz"),
                                          "model checkpoint"))
    ca_bounds = split_bounds(dataset.n_steps, config.split_fractions())[1]
    tracks = _stream_quantiles(config, dataset, model, ca_bounds,
                               _load_scaler(config))
    low, high, y = tracks["low"], tracks["high"], tracks["y"]
    if config.flags.per_user_windows:
        windows = [calibrate(zip(low[:, j], high[:, j]), y[:, j])
                   for j in range(dataset.n_users)]
    else:
        # one global window; scores in time-major, user-minor order
        pairs = [(low[i, j], high[i, j])
                 for i in range(low.shape[0]) for j in range(low.shape[1])]
        targets = y.reshape(-1)
        windows = [calibrate(pairs, targets)]
    blob = {"alpha": config.alpha,
            "per_user": bool(config.flags.per_user_windows),
            "windows": [{"capacity": w.capacity, "cursor": w.cursor,
                         "scores": w.scores} for w in windows]}
    path = _artifact(config, "calibration.json")
    path.write_text(json.dumps(blob), encoding="utf-8")
    return {"command": "calibrate", "calibration": str(path),
            "windows": len(windows),
            "window_capacity": windows[0].capacity}


def _load_calibration(config: PipelineConfig) -> tuple:
    path = _require(_artifact(config, "calibration.json"), "calibration file")
    blob = json.loads(path.read_text(encoding="utf-8"))
    windows = [NonconformityWindow(w["scores"], w["capacity"])
               for w in blob["windows"]]
    for w, raw in zip(windows, blob["windows"]):
        w.cursor = int(raw["cursor"])
    return blob["alpha"], bool(blob["per_user"]), windows


def cmd_predict(config: PipelineConfig) -> dict:
    dataset = _load_dataset(config)
    model = GraphForecaster.load(_require(_artifact(config, "model.npz"),
                                          "model checkpoint"))
    alpha, per_user, windows = _load_calibration(config)
    if per_user and len(windows) != dataset.n_users:
        raise ValueError(f"{len(windows)} calibration windows for "
                         f"{dataset.n_users} users")
    te_bounds = split_bounds(dataset.n_steps, config.split_fractions())[2]
    tracks = _stream_quantiles(config, dataset, model, te_bounds,
                               _load_scaler(config))
    update = not config.flags.static_cqr
    n_times, n_users = tracks["low"].shape
    path = _artifact(config, "intervals.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "user_id", "low", "median", "high", "y_true"])
        for i in range(n_times):
            stamp = tracks["times"][i].isoformat()
            if not per_user:
                q = conformal_quantile(windows[0], alpha)
            for j in range(n_users):
                q_lo, q_up = monotone_repair(float(tracks["low"][i, j]),
                                             float(tracks["high"][i, j]))
                if per_user:
                    q = conformal_quantile(windows[j], alpha)
                interval = construct_interval(q_lo, q_up, q)
                writer.writerow([stamp, dataset.user_ids[j],
                                 _fmt(interval.low),
                                 _fmt(tracks["median"][i, j]),
                                 _fmt(interval.high),
                                 _fmt(tracks["y"][i, j])])
                if update:
                    score = nonconformity(q_lo, q_up, float(tracks["y"][i, j]))
                    (windows[j] if per_user else windows[0]).push(score)
    return {"command": "predict", "intervals": str(path),
            "rows": n_times * n_users, "rolling": update}


def cmd_evaluate(config: PipelineConfig) -> dict:
    path = _require(_artifact(config, "intervals.csv"), "intervals file")
    lows, meds, highs, ys = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = ["timestamp", "user_id", "low", "median", "high"]
        missing = [c for c in required if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        has_truth = "y_true" in (reader.fieldnames or [])
        if not has_truth:
            raise ValueError(f"{path}: evaluation needs the y_true column")
        for row in reader:
            lows.append(float(row["low"]))
            meds.append(float(row["median"]))
            highs.append(float(row["high"]))
            ys.append(float(row["y_true"]))
    if not ys:
        raise ValueError(f"{path}: no interval rows")
    report = evaluate_forecast(np.array(ys), np.array(meds), np.array(lows),
                               np.array(highs), config.alpha)
    report_path = _artifact(config, "report.json")
    report_path.write_text(report.to_json(), encoding="utf-8")
    return {"command": "evaluate", "report": str(report_path),
            **json.loads(report.to_json())}


def cmd_e2e(config: PipelineConfig) -> dict:
    steps = {}
    steps["generate"] = cmd_generate(config)
    steps["train"] = cmd_train(config)
    steps["calibrate"] = cmd_calibrate(config)
    steps["predict"] = cmd_predict(config)
    result = cmd_evaluate(config)
    result["command"] = "e2e"
    result["steps"] = {k: {kk: vv for kk, vv in v.items() if kk != "command"}
                       for k, v in steps.items()}
    return result


def run_command(verb: str, config: PipelineConfig) -> dict:
    if verb not in VERBS:
        raise ValueError(f"unknown command {verb!r}; expected one of {VERBS}")
    _prepare_outdir(config)
    handler = {"generate": cmd_generate, "train": cmd_train,
               "calibrate": cmd_calibrate, "predict": cmd_predict,
               "evaluate": cmd_evaluate, "e2e": cmd_e2e}[verb]
    return handler(config)
