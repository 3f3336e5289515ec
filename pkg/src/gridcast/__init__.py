"""gridcast: interval forecasts for metered energy readings on user graphs.

A self-contained stack: a small reverse-mode autodiff core, graph
construction and diffusion convolution, embedding-pool parameter
generation, a gated recurrent graph forecaster with a three-quantile head,
pinball-loss training, sequential conformal calibration for distribution-free
prediction intervals, and an end-to-end CLI over CSV data.
"""

from .autodiff import Tensor, finite_diff_check
from .data import EnergyDataset, SyntheticSpec, generate_synthetic
from .graphs import build_adjacency, build_diffusion, normalize
from .metrics import MetricsReport, evaluate_forecast, interval_metrics, point_metrics
from .model import GraphForecaster, ModelConfig, QuantilePrediction
from .pools import ParameterPool, TemporalEmbeddingTables, temporal_index
from .scqr import (
    NonconformityWindow,
    PredictionInterval,
    calibrate,
    conformal_quantile,
    construct_interval,
    nonconformity,
    scqr_stream,
)
from .training import Adam, LossConfig, TrainConfig, hybrid_loss, pinball_loss, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "EnergyDataset",
    "GraphForecaster",
    "LossConfig",
    "MetricsReport",
    "ModelConfig",
    "NonconformityWindow",
    "ParameterPool",
    "PredictionInterval",
    "QuantilePrediction",
    "SyntheticSpec",
    "TemporalEmbeddingTables",
    "Tensor",
    "TrainConfig",
    "build_adjacency",
    "build_diffusion",
    "calibrate",
    "conformal_quantile",
    "construct_interval",
    "evaluate_forecast",
    "finite_diff_check",
    "generate_synthetic",
    "hybrid_loss",
    "interval_metrics",
    "nonconformity",
    "normalize",
    "pinball_loss",
    "point_metrics",
    "scqr_stream",
    "temporal_index",
    "train",
    "__version__",
]
