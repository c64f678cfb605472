"""Demo 1: a synthetic city with a planted greening effect.

The generator places vacant lots, census blocks and block groups, zoned
parcels and businesses on a plane, chooses which lots get greened from a
confounded index, and simulates crimes whose rate drops by a known amount
after greening.  The ground truth travels with the city.
"""

# %%
from collections import Counter

import numpy as np

from _city import demo_city

city = demo_city(seed=0)
truth = city.truth
print(f"lots: {len(city.lots)}  crimes: {len(city.crimes)}")
print(f"greened: {truth.n_treated}  ungreened: {truth.n_control}")

# %% [markdown]
# The planted effect is in crimes per year inside the 200 m disc around a lot.

# %%
cfg = truth.config
print(f"planted effect: serious {cfg.true_effect_serious}, other {cfg.true_effect_other}, "
      f"total {cfg.true_effect_total}")
for cat, bias in truth.predicted_unmatched_bias.items():
    print(f"predicted bias of the naive unmatched comparison ({cat}): {bias:+.3f}")

# %% [markdown]
# Greened lots are not a random sample: the latent greening propensity is
# tied to the surroundings, and so is the crime trend.

# %%
greened = np.array([lot.greened for lot in city.lots])
print(f"mean latent propensity, greened:   {city.propensity[greened].mean():.3f}")
print(f"mean latent propensity, ungreened: {city.propensity[~greened].mean():.3f}")
print(f"mean yearly trend, greened:   {city.trend[greened].mean():+.4f}")
print(f"mean yearly trend, ungreened: {city.trend[~greened].mean():+.4f}")

# %%
years = Counter(lot.greening_date.year for lot in city.lots if lot.greened)
for year in sorted(years):
    print(year, "#" * (years[year] // 4))
