"""Run configuration: a nested mapping file plus dotted command-line overrides.

Sections: graph, dims, train, data, split, flags, paths; top-level scalars
alpha and seed. Every run dumps its fully resolved configuration back into
the output directory, defaults included, so artifacts are reproducible.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .data import SplitFractions, SyntheticSpec
from .model import ModelConfig
from .training import LossConfig, TrainConfig


@dataclass(frozen=True)
class GraphSettings:
    sigma2: float = 2.0
    threshold: float = 0.1
    k_hops: int = 2

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        if self.k_hops < 0:
            raise ValueError("k_hops must be >= 0")


@dataclass(frozen=True)
class DimsSettings:
    d_s: int = 12
    d_tod: int = 8
    d_dow: int = 4
    d_moy: int = 4
    hidden: int = 8
    pool_width: int = 8            # M: width of free-standing parameter pools
    n_banks: int = 1               # I: blocks per pool (coarse-retrieval banks)
    block_widths: tuple | None = None  # explicit partition for free-standing pools
    sim: str = "cosine"

    def __post_init__(self):
        for name in ("d_s", "d_tod", "d_dow", "d_moy", "hidden",
                     "pool_width", "n_banks"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.block_widths is not None:
            object.__setattr__(self, "block_widths", tuple(self.block_widths))
            if sum(self.block_widths) != self.pool_width:
                raise ValueError("block_widths must sum to pool_width")
        if self.sim not in ("cosine", "dot"):
            raise ValueError(f"unknown similarity {self.sim!r}")


@dataclass(frozen=True)
class TrainSettings:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 5.0
    window: int = 48
    horizon: int = 12

    def __post_init__(self):
        # TrainConfig repeats the checks; construct one to validate eagerly.
        TrainConfig(**asdict(self), seed=0)


@dataclass(frozen=True)
class DataSettings:
    n_users: int = 20
    n_regions: int = 4
    days: int = 14
    steps_per_day: int = 48
    noise: float = 0.05
    shift_at: int | None = None
    shift_scale: float = 1.0

    def __post_init__(self):
        SyntheticSpec(**asdict(self), seed=0)


@dataclass(frozen=True)
class SplitSettings:
    train: float = 0.6
    calibration: float = 0.2
    test: float = 0.2

    def __post_init__(self):
        SplitFractions(**asdict(self))


@dataclass(frozen=True)
class FlagSettings:
    blockwise: bool = False
    per_user_windows: bool = False
    disable_macro: bool = False
    disable_pools: bool = False
    static_cqr: bool = False


@dataclass(frozen=True)
class PathSettings:
    out_dir: str = "runs/demo"
    data_dir: str | None = None  # default: <out_dir>/data


@dataclass(frozen=True)
class PipelineConfig:
    graph: GraphSettings = field(default_factory=GraphSettings)
    dims: DimsSettings = field(default_factory=DimsSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    data: DataSettings = field(default_factory=DataSettings)
    split: SplitSettings = field(default_factory=SplitSettings)
    flags: FlagSettings = field(default_factory=FlagSettings)
    paths: PathSettings = field(default_factory=PathSettings)
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        LossConfig(self.alpha)
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")

    # -- derived views ----------------------------------------------------------

    @property
    def out_dir(self) -> Path:
        return Path(self.paths.out_dir)

    @property
    def data_dir(self) -> Path:
        if self.paths.data_dir is not None:
            return Path(self.paths.data_dir)
        return self.out_dir / "data"

    def train_config(self) -> TrainConfig:
        return TrainConfig(**asdict(self.train), seed=self.seed)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.alpha)

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(**asdict(self.data), seed=self.seed)

    def split_fractions(self) -> SplitFractions:
        return SplitFractions(**asdict(self.split))

    def model_config(self, n_nodes: int, steps_per_day: int) -> ModelConfig:
        return ModelConfig(
            n_nodes=n_nodes,
            steps_per_day=steps_per_day,
            horizon=self.train.horizon,
            k_hops=self.graph.k_hops,
            d_s=self.dims.d_s,
            d_tod=self.dims.d_tod,
            d_dow=self.dims.d_dow,
            d_moy=self.dims.d_moy,
            h=self.dims.hidden,
            n_banks=self.dims.n_banks,
            blockwise=self.flags.blockwise,
            sim=self.dims.sim,
            use_pools=not self.flags.disable_pools,
        )


_SECTIONS = {
    "graph": GraphSettings,
    "dims": DimsSettings,
    "train": TrainSettings,
    "data": DataSettings,
    "split": SplitSettings,
    "flags": FlagSettings,
    "paths": PathSettings,
}
_SCALARS = ("alpha", "seed")


def _build_section(cls, mapping, name):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ValueError(f"config section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ValueError(f"unknown keys in section {name!r}: {sorted(unknown)}")
    return cls(**mapping)


def config_from_mapping(mapping) -> PipelineConfig:
    mapping = dict(mapping or {})
    unknown = set(mapping) - set(_SECTIONS) - set(_SCALARS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for name, cls in _SECTIONS.items():
        if name in mapping:
            kwargs[name] = _build_section(cls, mapping[name], name)
    for name in _SCALARS:
        if name in mapping:
            kwargs[name] = mapping[name]
    return PipelineConfig(**kwargs)


def parse_override(text: str) -> tuple:
    """'section.key=value' (or 'alpha=0.05') with the value read as YAML."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    path = key.strip().split(".")
    if not all(path) or len(path) > 2:
        raise ValueError(f"override key {key!r} must be 'key' or 'section.key'")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        raise ValueError(f"override value {raw!r} is not valid")
    return path, value


def apply_overrides(mapping: dict, overrides) -> dict:
    mapping = dict(mapping or {})
    for text in overrides:
        path, value = parse_override(text)
        if len(path) == 1:
            mapping[path[0]] = value
        else:
            section = dict(mapping.get(path[0]) or {})
            section[path[1]] = value
            mapping[path[0]] = section
    return mapping


def load_config(path=None, overrides=()) -> PipelineConfig:
    mapping = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            mapping = yaml.safe_load(fh)
        if mapping is None:
            mapping = {}
        if not isinstance(mapping, dict):
            raise ValueError(f"{path}: top level must be a mapping")
    mapping = apply_overrides(mapping, overrides)
    return config_from_mapping(mapping)


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def dump_config(config: PipelineConfig, path) -> None:
    """Write the fully resolved configuration, defaults included."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_plain(asdict(config)), fh, sort_keys=False)
