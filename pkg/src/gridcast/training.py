"""Quantile losses, adaptive-moment optimizer, and the mini-batch train loop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, absolute, lift, maximum, tmean
from .graphs import batch_macro_channel
from .model import GraphForecaster, QuantilePrediction

ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss or a gradient went non-finite; message carries the step index."""


@dataclass(frozen=True)
class LossConfig:
    """Target miscoverage rate and the symmetric quantile pair it implies."""
    alpha: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")

    @property
    def alpha_lo(self) -> float:
        return self.alpha / 2.0

    @property
    def alpha_up(self) -> float:
        return 1.0 - self.alpha / 2.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 5.0
    window: int = 48
    horizon: int = 12
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("batch_size", "lr", "clip_norm", "window", "horizon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0,1)")


# -- losses -------------------------------------------------------------------


def pinball_loss(y, y_hat, alpha: float) -> Tensor:
    """mean( max(alpha*(y - y_hat), (alpha-1)*(y - y_hat)) ).

    Nonnegative, zero iff y == y_hat. At the kink the subgradient taken is
    d/dy_hat = -alpha (ties in the max route to its first argument).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0,1), got {alpha}")
    e = lift(y) - lift(y_hat)
    return tmean(maximum(alpha * e, (alpha - 1.0) * e))


def hybrid_loss(y, pred: QuantilePrediction, cfg: LossConfig) -> Tensor:
    """Pinball on the low and high tracks plus MAE on the median track."""
    y = lift(y)
    return (pinball_loss(y, pred.low, cfg.alpha_lo)
            + pinball_loss(y, pred.high, cfg.alpha_up)
            + tmean(absolute(y - pred.median)))


# -- optimizer ----------------------------------------------------------------


class Adam:
    """Adaptive moments with bias correction; global-norm clipping first."""

    def __init__(self, named_params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, clip_norm: float = 5.0):
        self.named = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {name: np.zeros(p.shape) for name, p in self.named}
        self._v = {name: np.zeros(p.shape) for name, p in self.named}

    @classmethod
    def from_config(cls, named_params, cfg: TrainConfig) -> "Adam":
        return cls(named_params, cfg.lr, cfg.beta1, cfg.beta2, cfg.clip_norm)

    def zero_grad(self) -> None:
        for _, p in self.named:
            p.zero_grad()

    def step(self) -> None:
        grads = {}
        sq = 0.0
        for name, p in self.named:
            g = np.zeros(p.shape) if p.grad is None else p.grad
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in {name!r}")
            grads[name] = g
            sq += float((g * g).sum())
        norm = math.sqrt(sq)
        scale = self.clip_norm / norm if norm > self.clip_norm else 1.0
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.named:
            g = grads[name] * scale
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(f"non-finite gradient in {name!r} after clipping")
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.assign(p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))


# -- training loop -------------------------------------------------------------


def train(samples, model: GraphForecaster, train_cfg: TrainConfig,
          loss_cfg: LossConfig, region_of=None, n_regions: int = 0,
          log_path=None) -> list:
    """Seeded full-pass mini-batch training; returns [(epoch, step, loss), ...].

    ``samples`` is a sequence of (window, target, last_input_timestamp)
    triples, window (T_in, N) and target (T_out, N). The region-mean channel
    is derived from each window when ``region_of`` is given, else zeroed
    (the ablated hierarchy). Deterministic for a fixed seed; a non-finite
    loss or gradient aborts with the offending step index.
    """
    samples = [(s.window, s.target, s.last_ts) if hasattr(s, "window") else tuple(s)
               for s in samples]
    if not samples:
        raise ValueError("training set is empty")
    rng = np.random.default_rng(train_cfg.seed)
    opt = Adam.from_config(model.named_parameters(), train_cfg)
    trace = []
    log = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        step = 0
        for epoch in range(train_cfg.epochs):
            order = rng.permutation(len(samples))
            for lo in range(0, len(order), train_cfg.batch_size):
                chunk = order[lo:lo + train_cfg.batch_size]
                xs = np.stack([samples[i][0] for i in chunk])
                ys = np.stack([samples[i][1] for i in chunk])
                ts = [samples[i][2] for i in chunk]
                if region_of is not None:
                    macro = batch_macro_channel(xs, region_of, n_regions)
                else:
                    macro = np.zeros_like(xs)
                opt.zero_grad()
                pred = model.forward(xs, macro, ts)
                loss = hybrid_loss(ys, pred, loss_cfg)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDiverged(f"non-finite loss at step {step}")
                loss.backward()
                try:
                    opt.step()
                except TrainingDiverged as exc:
                    raise TrainingDiverged(f"step {step}: {exc}") from None
                model.refresh_centroids()
                trace.append((epoch, step, value))
                if log:
                    log.write(f"{epoch},{step},{value!r}\n")
                step += 1
    finally:
        if log:
            log.close()
    return trace


def epoch_means(trace) -> list:
    """Mean loss per epoch from a (epoch, step, loss) trace."""
    sums, counts = {}, {}
    for epoch, _, value in trace:
        sums[epoch] = sums.get(epoch, 0.0) + value
        counts[epoch] = counts.get(epoch, 0) + 1
    return [sums[e] / counts[e] for e in sorted(sums)]
