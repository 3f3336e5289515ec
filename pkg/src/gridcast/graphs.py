"""Hierarchical graph construction: user-level and region-level adjacency.

Edge weights follow a thresholded Gaussian kernel on squared Euclidean
distance between node centroids: w_ij = exp(-d_ij^2 / sigma2) when i != j
and the value clears the sparsity cutoff r, else 0. The diffusion operator
used by the network is the random-walk normalization with self-loops,
D^-1 (A + I), raised to powers 0..K.

The region-level signal is derived by mean-aggregating member users, since
upstream data only carries per-user readings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NodeSet:
    """Nodes of one hierarchy level with planar coordinates.

    ``region_of`` maps each micro node to the index of its region and must
    be None at the macro level.
    """
    ids: tuple
    coords: np.ndarray          # n x 2
    level: str                  # "micro" | "macro"
    region_of: np.ndarray | None = None

    def __post_init__(self):
        if self.level not in ("micro", "macro"):
            raise ValueError(f"unknown level {self.level!r}")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("node ids must be unique")
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.shape != (len(self.ids), 2):
            raise ValueError(f"coords must be ({len(self.ids)}, 2), got {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        object.__setattr__(self, "coords", coords)
        if self.level == "micro":
            if self.region_of is None:
                raise ValueError("micro nodes need a region_of mapping")
            region_of = np.asarray(self.region_of, dtype=np.int64)
            if region_of.shape != (len(self.ids),):
                raise ValueError("region_of must give one region per node")
            object.__setattr__(self, "region_of", region_of)

    @property
    def n(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class AdjacencyMatrix:
    n: int
    weights: np.ndarray
    sigma2: float
    r: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.n, self.n):
            raise ValueError(f"weights must be ({self.n},{self.n}), got {w.shape}")
        object.__setattr__(self, "weights", w)

    def edge_count(self) -> int:
        return int(np.count_nonzero(self.weights) // 2)


@dataclass(frozen=True)
class DiffusionOperator:
    """Powers [A~^0 ... A~^K] of the normalized adjacency; each row-stochastic."""
    powers: list = field(default_factory=list)

    @property
    def order(self) -> int:
        return len(self.powers) - 1

    def stacked(self) -> np.ndarray:
        return np.stack(self.powers, axis=0)


def build_adjacency(nodes: NodeSet, sigma2: float, r: float) -> AdjacencyMatrix:
    """Thresholded Gaussian-kernel weights over pairwise centroid distances."""
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if nodes.n < 1:
        raise ValueError("need at least one node")
    diff = nodes.coords[:, None, :] - nodes.coords[None, :, :]
    d2 = (diff * diff).sum(axis=-1)
    weights = np.exp(-d2 / sigma2)
    weights[weights < r] = 0.0
    np.fill_diagonal(weights, 0.0)
    return AdjacencyMatrix(n=nodes.n, weights=weights, sigma2=sigma2, r=r)


def normalize(adj: AdjacencyMatrix) -> np.ndarray:
    """Random-walk normalization with self-loops: D^-1 (A + I).

    Self-loops guarantee strictly positive row sums, so the result is always
    row-stochastic, even for isolated nodes.
    """
    a = adj.weights + np.eye(adj.n)
    return a / a.sum(axis=1, keepdims=True)


def diffusion_powers(a_tilde: np.ndarray, K: int) -> DiffusionOperator:
    """[I, A~, A~^2, ..., A~^K] by repeated multiplication."""
    if K < 0:
        raise ValueError(f"diffusion order must be >= 0, got {K}")
    n = a_tilde.shape[0]
    powers = [np.eye(n)]
    for _ in range(K):
        powers.append(powers[-1] @ a_tilde)
    return DiffusionOperator(powers=powers)


def build_diffusion(nodes: NodeSet, sigma2: float, r: float, K: int) -> DiffusionOperator:
    return diffusion_powers(normalize(build_adjacency(nodes, sigma2, r)), K)


def aggregate_macro(readings: np.ndarray, region_of: np.ndarray, n_regions: int) -> np.ndarray:
    """Region signal: mean over member users, per timestep. (T, N) -> (T, R)."""
    readings = np.asarray(readings, dtype=np.float64)
    out = np.zeros((readings.shape[0], n_regions))
    counts = np.zeros(n_regions)
    np.add.at(counts, region_of, 1.0)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0)
        raise ValueError(f"regions with no members: {empty.tolist()}")
    np.add.at(out.T, region_of, readings.T)
    return out / counts


def broadcast_to_users(macro_signal: np.ndarray, region_of: np.ndarray) -> np.ndarray:
    """Expand a (T, R) region signal back to (T, N) by membership."""
    return np.asarray(macro_signal)[:, region_of]


def batch_macro_channel(windows: np.ndarray, region_of: np.ndarray,
                        n_regions: int) -> np.ndarray:
    """Region-mean channel aligned with its members: (..., N) -> (..., N).

    Works on any leading batch/time axes; the trailing axis must index users.
    """
    windows = np.asarray(windows, dtype=np.float64)
    n = windows.shape[-1]
    onehot = np.zeros((n, n_regions))
    onehot[np.arange(n), region_of] = 1.0
    counts = onehot.sum(axis=0)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0)
        raise ValueError(f"regions with no members: {empty.tolist()}")
    regional = windows @ onehot / counts
    return regional[..., region_of]
