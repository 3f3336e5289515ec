"""Recurrent graph forecaster with pool-generated convolution kernels.

One gated recurrent cell runs over the user graph. Each gate applies a
diffusion graph convolution whose kernel is generated per forward pass:
a per-node piece from the spatial embedding and a per-sample piece from the
temporal embedding of each sample's last input timestep, fused additively.
The final hidden state feeds a single affine head that emits three quantile
tracks (low, median, high) for every horizon step.

Input channels are fixed at two per node and timestep: the node's own
reading and its region's mean reading broadcast back to members. Callers
that want to ablate the region channel pass zeros for it.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, concat, einsum2, lift, matmul, mul, reshape, sigmoid, tanh, transpose
from .graphs import DiffusionOperator
from .pools import (
    ParameterPool,
    TemporalEmbeddingTables,
    generate_meta_params,
    temporal_query,
    uniform_init,
)

GATES = ("reset", "update", "candidate")
INPUT_CHANNELS = 2  # own reading + broadcast region mean


@dataclass(frozen=True)
class ModelConfig:
    n_nodes: int
    steps_per_day: int
    horizon: int
    k_hops: int              # K; each convolution mixes K+1 adjacency powers
    d_s: int = 12
    d_tod: int = 8
    d_dow: int = 4
    d_moy: int = 4
    h: int = 8
    n_banks: int = 1         # blocks per gate pool (coarse-retrieval banks)
    blockwise: bool = False  # route each query through its best bank only
    sim: str = "cosine"
    use_pools: bool = True   # False: directly trained static kernels

    def __post_init__(self):
        dims = dict(n_nodes=self.n_nodes, steps_per_day=self.steps_per_day,
                    horizon=self.horizon, d_s=self.d_s, d_tod=self.d_tod,
                    d_dow=self.d_dow, d_moy=self.d_moy, h=self.h,
                    n_banks=self.n_banks)
        for name, value in dims.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.k_hops < 0:
            raise ValueError(f"k_hops must be >= 0, got {self.k_hops}")
        if self.sim not in ("cosine", "dot"):
            raise ValueError(f"unknown similarity {self.sim!r}")

    @property
    def d_t(self) -> int:
        return self.d_tod + self.d_dow + self.d_moy

    @property
    def channels(self) -> int:
        """Gate-input channels C: both input channels plus the hidden state."""
        return INPUT_CHANNELS + self.h

    @property
    def kernel_shape(self) -> tuple:
        return (self.k_hops + 1, self.channels, self.h)


@dataclass
class GateParams:
    """Additive kernel contributions plus bias for one gate.

    Each contribution is (W, w_axis): w_axis None for a shared K+1 x C x h
    kernel, "node" for a leading per-node axis, "sample" for per-sample.
    The effective kernel is the sum of all contributions.
    """
    contributions: tuple
    bias: Tensor


@dataclass
class CellParams:
    reset: GateParams
    update: GateParams
    candidate: GateParams


@dataclass
class QuantilePrediction:
    """Three quantile tracks, each B x T_out x N, in the signal's units."""
    low: Tensor
    median: Tensor
    high: Tensor

    @property
    def shape(self) -> tuple:
        return self.low.shape


# -- diffusion graph convolution ----------------------------------------------


def _spread(stack: Tensor, U: Tensor) -> Tensor:
    """All diffused copies of U at once: (K+1, B, N, C) from (B, N, C)."""
    return einsum2("kij,bjc->kbic", stack, U)


def _contract(spread: Tensor, W: Tensor, w_axis):
    k1 = spread.shape[0]
    c = spread.shape[3]
    if w_axis is None:
        expect, sub = (k1, c, W.shape[-1]), "kbnc,kch->bnh"
    elif w_axis == "node":
        expect, sub = (spread.shape[2], k1, c, W.shape[-1]), "kbnc,nkch->bnh"
    elif w_axis == "sample":
        expect, sub = (spread.shape[1], k1, c, W.shape[-1]), "kbnc,bkch->bnh"
    else:
        raise ValueError(f"unknown w_axis {w_axis!r}")
    if W.shape != expect:
        raise ShapeError(f"kernel shape {W.shape} != expected {expect} "
                         f"for w_axis={w_axis!r}")
    return einsum2(sub, spread, W)


def graph_conv(U, diffusion: DiffusionOperator, W, w_axis=None) -> Tensor:
    """Z = sum_k A~^k U W_k over the operator's K+1 powers.

    U: (B, N, C). W: (K+1, C, h) shared, or with a leading node/sample axis
    selected by ``w_axis`` ("node" -> (N, K+1, C, h), "sample" -> (B, ...)).
    """
    U = lift(U)
    W = lift(W)
    stack = Tensor(diffusion.stacked())
    if U.data.ndim != 3 or U.shape[1] != stack.shape[1]:
        raise ShapeError(f"graph_conv input {U.shape} incompatible with "
                         f"{stack.shape[1]}-node operator")
    return _contract(_spread(stack, U), W, w_axis)


def _gate_preact(spread: Tensor, gate: GateParams):
    z = gate.bias
    for W, axis in gate.contributions:
        z = _contract(spread, W, axis) + z
    return z


def cell_step(X_t, H_prev, params: CellParams, diffusion) -> Tensor:
    """One gated recurrence: reset/update gates, candidate, convex blend."""
    X_t, H_prev = lift(X_t), lift(H_prev)
    stack = diffusion if isinstance(diffusion, Tensor) else Tensor(diffusion.stacked())
    xh = concat([X_t, H_prev], axis=-1)
    s_xh = _spread(stack, xh)
    r = sigmoid(_gate_preact(s_xh, params.reset))
    u = sigmoid(_gate_preact(s_xh, params.update))
    s_xrh = _spread(stack, concat([X_t, mul(r, H_prev)], axis=-1))
    c = tanh(_gate_preact(s_xrh, params.candidate))
    return u * H_prev + (1.0 - u) * c


# -- the forecaster ------------------------------------------------------------


class GraphForecaster:
    """Sequence encoder over the user graph plus a three-quantile head."""

    def __init__(self, config: ModelConfig, diffusion: DiffusionOperator,
                 rng: np.random.Generator):
        if diffusion.order != config.k_hops:
            raise ValueError(f"operator has order {diffusion.order}, "
                             f"config expects {config.k_hops}")
        if diffusion.powers[0].shape[0] != config.n_nodes:
            raise ValueError(f"operator is over {diffusion.powers[0].shape[0]} "
                             f"nodes, config expects {config.n_nodes}")
        self.config = config
        self.diffusion = diffusion
        self._stack = Tensor(diffusion.stacked())

        cfg = config
        self.spatial = Tensor(uniform_init(rng, (cfg.n_nodes, cfg.d_s), cfg.d_s),
                              requires_grad=True)
        self.temporal = TemporalEmbeddingTables.create(
            rng, cfg.steps_per_day, cfg.d_tod, cfg.d_dow, cfg.d_moy)

        k1, c, h = cfg.kernel_shape
        kernel_size = k1 * c * h
        self.gate_pools = {}
        self.static_kernels = {}
        for gate in GATES:
            if cfg.use_pools:
                widths = [kernel_size] * cfg.n_banks
                self.gate_pools[gate] = (
                    ParameterPool.create(rng, cfg.d_s, cfg.n_banks * kernel_size, widths),
                    ParameterPool.create(rng, cfg.d_t, cfg.n_banks * kernel_size, widths),
                )
            else:
                self.static_kernels[gate] = Tensor(
                    uniform_init(rng, (k1, c, h), k1 * c), requires_grad=True)
        self.biases = {gate: Tensor(np.zeros(h), requires_grad=True)
                       for gate in GATES}
        self.head_weight = Tensor(uniform_init(rng, (h, 3 * cfg.horizon), h),
                                  requires_grad=True)
        self.head_bias = Tensor(np.zeros(3 * cfg.horizon), requires_grad=True)

    # -- parameter access -----------------------------------------------------

    def named_parameters(self) -> list:
        out = [("spatial_embedding", self.spatial),
               ("temporal_tod", self.temporal.tod),
               ("temporal_dow", self.temporal.dow),
               ("temporal_moy", self.temporal.moy)]
        for gate in GATES:
            if self.config.use_pools:
                ps, pt = self.gate_pools[gate]
                out.append((f"{gate}_spatial_pool", ps.full))
                out.append((f"{gate}_temporal_pool", pt.full))
            else:
                out.append((f"{gate}_kernel", self.static_kernels[gate]))
            out.append((f"{gate}_bias", self.biases[gate]))
        out.append(("head_weight", self.head_weight))
        out.append(("head_bias", self.head_bias))
        return out

    def parameters(self) -> list:
        return [t for _, t in self.named_parameters()]

    def count_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def refresh_centroids(self) -> None:
        for ps, pt in self.gate_pools.values():
            ps.refresh_centroids()
            pt.refresh_centroids()

    # -- forward --------------------------------------------------------------

    def cell_params(self, last_timestamps) -> CellParams:
        """Generate this batch's gate kernels from the embedding pools."""
        cfg = self.config
        if not cfg.use_pools:
            return CellParams(*[
                GateParams(((self.static_kernels[g], None),), self.biases[g])
                for g in GATES])
        query = temporal_query(self.temporal, last_timestamps)
        gates = []
        for g in GATES:
            ps, pt = self.gate_pools[g]
            w_t, w_s = generate_meta_params(query.embedding, self.spatial,
                                            pt, ps, cfg.kernel_shape,
                                            cfg.blockwise, cfg.sim)
            gates.append(GateParams(((w_s, "node"), (w_t, "sample")),
                                    self.biases[g]))
        return CellParams(*gates)

    def encode(self, X, macro_feature, params: CellParams) -> Tensor:
        """Run the cell over T_in steps from a zero state; return H_final."""
        X, macro = lift(X), lift(macro_feature)
        if X.data.ndim != 3 or X.shape != macro.shape:
            raise ShapeError(f"encode expects matching B x T x N inputs, "
                             f"got {X.shape} and {macro.shape}")
        b, t_in, n = X.shape
        if n != self.config.n_nodes:
            raise ShapeError(f"input has {n} nodes, model has {self.config.n_nodes}")
        if t_in < 1:
            raise ShapeError("encode needs at least one input step")
        xm = concat([reshape(X, (b, t_in, n, 1)),
                     reshape(macro, (b, t_in, n, 1))], axis=-1)
        h = Tensor(np.zeros((b, n, self.config.h)))
        for t in range(t_in):
            h = cell_step(xm[:, t], h, params, self._stack)
        return h

    def predict(self, h_final: Tensor) -> QuantilePrediction:
        """Affine head h -> 3*T_out per node, split into the three tracks."""
        b, n, _ = h_final.shape
        flat = matmul(h_final, self.head_weight) + self.head_bias
        cube = reshape(flat, (b, n, 3, self.config.horizon))
        tracks = [transpose(cube[:, :, i, :], (0, 2, 1)) for i in range(3)]
        return QuantilePrediction(*tracks)

    def forward(self, X, macro_feature, last_timestamps) -> QuantilePrediction:
        X = lift(X)
        if X.shape[0] != len(last_timestamps):
            raise ShapeError(f"{X.shape[0]} samples but "
                             f"{len(last_timestamps)} timestamps")
        params = self.cell_params(last_timestamps)
        return self.predict(self.encode(X, macro_feature, params))

    __call__ = forward

    # -- checkpointing ---------------------------------------------------------

    def save(self, path) -> None:
        """Checkpoint every trainable plus config and operator; bit-exact."""
        arrays = {name: np.asarray(t.data) for name, t in self.named_parameters()}
        arrays["__config__"] = np.array(json.dumps(asdict(self.config)))
        arrays["__diffusion__"] = self.diffusion.stacked()
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "GraphForecaster":
        with np.load(path, allow_pickle=False) as bundle:
            cfg = ModelConfig(**json.loads(str(bundle["__config__"])))
            diffusion = DiffusionOperator(list(bundle["__diffusion__"]))
            model = cls(cfg, diffusion, np.random.default_rng(0))
            for name, tensor in model.named_parameters():
                tensor.assign(bundle[name])
        model.refresh_centroids()
        return model
