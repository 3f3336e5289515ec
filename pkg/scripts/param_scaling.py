#!/usr/bin/env python3
"""Print trainable-parameter counts vs. node count and dataset length.

Pool-generated kernels keep the count independent of the series length and
affine in the number of nodes (only the spatial embedding grows with N).
"""

import numpy as np

from gridcast.data import SyntheticSpec, generate_synthetic
from gridcast.graphs import build_diffusion
from gridcast.model import GraphForecaster, ModelConfig

print("N      params")
for n in (10, 20, 40, 80):
    spec = SyntheticSpec(n_users=n, n_regions=4, days=3, seed=0)
    ds = generate_synthetic(spec)
    diff = build_diffusion(ds.micro_nodes(), sigma2=2.0, r=0.1, K=2)
    model = GraphForecaster(
        ModelConfig(n_nodes=n, steps_per_day=48, horizon=12, k_hops=2),
        diff, rng=np.random.default_rng(0))
    print(f"{n:<6d} {model.count_parameters()}")

print("\ndays   T      params   (N=20)")
for days in (3, 14, 60):
    spec = SyntheticSpec(n_users=20, n_regions=4, days=days, seed=0)
    ds = generate_synthetic(spec)
    diff = build_diffusion(ds.micro_nodes(), sigma2=2.0, r=0.1, K=2)
    model = GraphForecaster(
        ModelConfig(n_nodes=20, steps_per_day=48, horizon=12, k_hops=2),
        diff, rng=np.random.default_rng(0))
    print(f"{days:<6d} {ds.n_steps:<6d} {model.count_parameters()}")
