"""Synthetic cities with planted effects, and brute-force reference oracles."""
from .city import GroundTruth, SynthConfig, SyntheticCity, generate_city, write_city
from .oracles import (
    auc_oracle,
    fd_gradient,
    mle_oracle,
    naive_radius_count,
    naive_radius_sum,
    optimal_match_oracle,
    t_cdf_oracle,
)

__all__ = [
    "GroundTruth",
    "SynthConfig",
    "SyntheticCity",
    "generate_city",
    "write_city",
    "auc_oracle",
    "fd_gradient",
    "mle_oracle",
    "naive_radius_count",
    "naive_radius_sum",
    "optimal_match_oracle",
    "t_cdf_oracle",
]
