"""Embedding tables and shared parameter pools.

Task-specific parameters are generated by multiplying an embedding against a
trainable pool. Pools can be partitioned into blocks along the width axis;
a centroid per block (column-mean of the block, refreshed after every
optimizer step) supports coarse retrieval: score the query against every
centroid, pick the best block, and multiply the query with that block only.
Block selection is non-differentiable routing; gradients flow through the
selected block.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .autodiff import Tensor, concat, matmul, reshape

DOW_SIZE = 7
MOY_SIZE = 12


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """U(-0.5/sqrt(d), 0.5/sqrt(d)) keeps initial gate pre-activations near 0."""
    bound = 0.5 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# -- temporal embeddings ------------------------------------------------------


@dataclass
class TemporalQuery:
    """Per-sample calendar indices and the concatenated embedding rows."""
    indices: list       # B entries of (tod, dow, moy)
    embedding: Tensor   # B x d_t

    @property
    def batch(self) -> int:
        return len(self.indices)


@dataclass
class TemporalEmbeddingTables:
    """Time-of-day, day-of-week, and month-of-year lookup tables."""
    tod: Tensor
    dow: Tensor
    moy: Tensor
    steps_per_day: int

    def __post_init__(self):
        if self.tod.shape[0] != self.steps_per_day:
            raise ValueError(
                f"tod table has {self.tod.shape[0]} rows, expected {self.steps_per_day}")
        if self.dow.shape[0] != DOW_SIZE:
            raise ValueError(f"dow table must have {DOW_SIZE} rows")
        if self.moy.shape[0] != MOY_SIZE:
            raise ValueError(f"moy table must have {MOY_SIZE} rows")

    @property
    def width(self) -> int:
        """Concatenated embedding width d_t."""
        return self.tod.shape[1] + self.dow.shape[1] + self.moy.shape[1]

    @classmethod
    def create(cls, rng, steps_per_day: int, d_tod: int, d_dow: int, d_moy: int):
        return cls(
            tod=Tensor(uniform_init(rng, (steps_per_day, d_tod), d_tod), requires_grad=True),
            dow=Tensor(uniform_init(rng, (DOW_SIZE, d_dow), d_dow), requires_grad=True),
            moy=Tensor(uniform_init(rng, (MOY_SIZE, d_moy), d_moy), requires_grad=True),
            steps_per_day=steps_per_day,
        )


def temporal_index(timestamp: datetime, steps_per_day: int) -> tuple:
    """(tod, dow, moy) indices for a calendar instant; Monday is dow 0."""
    if not isinstance(timestamp, datetime):
        raise ValueError(f"expected a datetime, got {type(timestamp).__name__}")
    if steps_per_day <= 0 or (24 * 60) % steps_per_day != 0:
        raise ValueError(
            f"steps_per_day must divide 24*60 minutes evenly, got {steps_per_day}")
    step_minutes = (24 * 60) // steps_per_day
    tod = (timestamp.hour * 60 + timestamp.minute) // step_minutes
    return tod, timestamp.weekday(), timestamp.month - 1


def _one_hot(indices, size: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.min() < 0 or indices.max() >= size:
        raise IndexError(f"index out of range for table of size {size}")
    out = np.zeros((len(indices), size))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def temporal_query(tables: TemporalEmbeddingTables, last_timestamps) -> TemporalQuery:
    """Per-sample temporal embedding from the last input timestep of each sample.

    Looks up one row per table using that timestep's (tod, dow, moy) and
    concatenates the three rows. Lookup is a one-hot product so gradients
    reach the tables. The embedding has shape (B, d_t).
    """
    idx = [temporal_index(ts, tables.steps_per_day) for ts in last_timestamps]
    if not idx:
        raise ValueError("temporal_query needs at least one timestamp")
    tods, dows, moys = zip(*idx)
    rows = [
        matmul(Tensor(_one_hot(tods, tables.steps_per_day)), tables.tod),
        matmul(Tensor(_one_hot(dows, DOW_SIZE)), tables.dow),
        matmul(Tensor(_one_hot(moys, MOY_SIZE)), tables.moy),
    ]
    return TemporalQuery(indices=idx, embedding=concat(rows, axis=-1))


# -- parameter pools -----------------------------------------------------------


class ParameterPool:
    """Trainable d x M pool, partitioned into blocks along the M axis."""

    def __init__(self, full: Tensor, block_widths=None):
        self.full = full
        d, m = full.shape
        widths = list(block_widths) if block_widths else [m]
        if any(w <= 0 for w in widths) or sum(widths) != m:
            raise ValueError(
                f"block widths {widths} must be positive and sum to pool width {m}")
        self.block_widths = widths
        bounds = np.cumsum([0] + widths)
        self._slices = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]
        self.centroids = np.empty((len(widths), d))
        self.refresh_centroids()

    @classmethod
    def create(cls, rng, d: int, m: int, block_widths=None):
        return cls(Tensor(uniform_init(rng, (d, m), d), requires_grad=True),
                   block_widths)

    @property
    def n_blocks(self) -> int:
        return len(self.block_widths)

    @property
    def width(self) -> int:
        return self.full.shape[1]

    def block(self, i: int) -> Tensor:
        lo, hi = self._slices[i]
        return self.full[:, lo:hi]

    def refresh_centroids(self) -> None:
        """Centroid of block i = column-mean over the block's M-axis."""
        data = self.full.data
        for i, (lo, hi) in enumerate(self._slices):
            self.centroids[i] = data[:, lo:hi].mean(axis=1)


def select_block(query, pool: ParameterPool, sim: str = "cosine") -> int:
    """Index of the centroid most similar to the query; ties take the lowest."""
    q = query.data if isinstance(query, Tensor) else np.asarray(query, dtype=np.float64)
    q = q.reshape(-1)
    if q.shape[0] != pool.centroids.shape[1]:
        raise ValueError(
            f"query dim {q.shape[0]} != centroid dim {pool.centroids.shape[1]}")
    if sim == "cosine":
        qn = np.linalg.norm(q)
        if qn == 0.0:
            raise ValueError("zero-norm query has no cosine direction")
        cn = np.linalg.norm(pool.centroids, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = (pool.centroids @ q) / np.where(cn == 0.0, np.inf, cn) / qn
    elif sim == "dot":
        scores = pool.centroids @ q
    else:
        raise ValueError(f"unknown similarity {sim!r}")
    return int(np.argmax(scores))  # argmax returns the first max: lowest index


def generate_params(E, pool: ParameterPool) -> Tensor:
    """theta = E . P for the full pool."""
    E = E if isinstance(E, Tensor) else Tensor(E)
    return matmul(E, pool.full)


def generate_params_blockwise(E, pool: ParameterPool, sim: str = "cosine"):
    """Per query row: select the best block, multiply the row with it only.

    Returns (theta, block_indices). All selected blocks must share one width
    (always true for equal partitions); mixed widths cannot stack into one
    matrix and raise.
    """
    E = E if isinstance(E, Tensor) else Tensor(E)
    n_rows = E.shape[0]
    indices = [select_block(E.data[i], pool, sim) for i in range(n_rows)]
    widths = {pool.block_widths[i] for i in indices}
    if len(widths) > 1:
        raise ValueError(f"selected blocks have mixed widths {sorted(widths)}")

    order = sorted(range(n_rows), key=lambda i: (indices[i], i))
    pieces = []
    start = 0
    while start < len(order):
        stop = start
        blk = indices[order[start]]
        while stop < len(order) and indices[order[stop]] == blk:
            stop += 1
        rows = order[start:stop]
        gather = np.zeros((len(rows), n_rows))
        gather[np.arange(len(rows)), rows] = 1.0
        pieces.append(matmul(matmul(Tensor(gather), E), pool.block(blk)))
        start = stop
    stacked = concat(pieces, axis=0) if len(pieces) > 1 else pieces[0]
    scatter = np.zeros((n_rows, n_rows))
    scatter[order, np.arange(n_rows)] = 1.0
    return matmul(Tensor(scatter), stacked), indices


def generate_kernel(E, pool: ParameterPool, kernel_shape: tuple,
                    blockwise: bool = False, sim: str = "cosine") -> Tensor:
    """Convolution kernel E . P reshaped to (rows, K+1, C, h).

    Full retrieval with several blocks averages the per-block kernels
    (identical to the single block when the pool has one), which keeps the
    result linear in E and scale-stable in the block count. Coarse retrieval
    (``blockwise``) instead routes each row through its best-matching block.
    """
    E = E if isinstance(E, Tensor) else Tensor(E)
    rows = E.shape[0]
    k, c, h = kernel_shape
    per_block = k * c * h
    if any(w != per_block for w in pool.block_widths):
        raise ValueError(
            f"pool blocks {pool.block_widths} do not match kernel size {per_block}")
    if blockwise:
        theta, _ = generate_params_blockwise(E, pool, sim)
        return reshape(theta, (rows, k, c, h))
    theta = matmul(E, pool.full)
    if pool.n_blocks == 1:
        return reshape(theta, (rows, k, c, h))
    banks = reshape(theta, (rows, pool.n_blocks, k, c, h))
    return banks.mean(axis=1)


def generate_meta_params(E_t, E_s, pool_t: ParameterPool, pool_s: ParameterPool,
                         kernel_shape: tuple, blockwise: bool = False,
                         sim: str = "cosine"):
    """(W_t, W_s): per-sample and per-node kernels from the two meta-pools."""
    w_t = generate_kernel(E_t, pool_t, kernel_shape, blockwise, sim)
    w_s = generate_kernel(E_s, pool_s, kernel_shape, blockwise, sim)
    return w_t, w_s


def trainable_count(tensors) -> int:
    """Total trainable values across a parameter collection."""
    return sum(t.size for t in tensors if t.requires_grad)
