"""Shared demo city: a quarter-size version of the default synthetic city."""
from lotmatch.synth import SynthConfig, generate_city

DEMO_SIZE = dict(n_lots=1600, extent=18_000.0, n_blocks=15_000, n_blockgroups=350,
                 n_zoned=40_000, n_businesses=7_500)


def demo_city(seed: int = 0, **overrides):
    return generate_city(SynthConfig(seed=seed, **{**DEMO_SIZE, **overrides}))
