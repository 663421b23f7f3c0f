"""Calibrate model families to a synthetic option surface.

Quotes are generated from a known stochastic-vol parameter set, so the
5-parameter family should recover it nearly exactly while the flat-vol
family is left with the smile it cannot bend.

Uses reduced multistart settings to stay fast; production calibrations use
the defaults.
"""

import datetime as dt

import numpy as np

from volhedge.calibration import calibrate, default_calib_config
from volhedge.models import ModelParams, SvParams
from volhedge.pricing import OptionSpec, carr_madan_strike_prices, implied_vol
from volhedge.vol_surface import QuoteRow

S0 = 100.0
TRUTH = SvParams(kappa=1.60, theta=1.10, sigma_v=0.68, rho=0.17, v0=0.35)

world = ModelParams(params=TRUTH, r=0.0, s0=S0)
day = dt.date(2020, 1, 6)
quotes = []
for days in (30, 90):
    tau = days / 365.0
    strikes = S0 * np.exp(np.linspace(-0.15, 0.18, 12))
    prices = carr_madan_strike_prices(world, tau, strikes)
    for strike, price in zip(strikes, prices):
        iv = implied_vol(float(price), S0, OptionSpec(float(strike), tau), 0.0)
        quotes.append(QuoteRow(day, day + dt.timedelta(days=days),
                               float(strike), "C", iv, 10.0, S0))
print(f"generated {len(quotes)} quotes from the true parameters {TRUTH}")

for family, n_starts in (("bs", 4), ("sv", 5)):
    cfg = default_calib_config(family, n_starts=n_starts, max_iter=80)
    res = calibrate(family, quotes, cfg)
    print(f"\n{family}: rmse {res.rmse:.2e} vol points over {res.n_quotes} "
          f"quotes (converged: {res.converged})")
    print(f"  {res.params.params}")

print("\nThe stochastic-vol fit lands on the generating parameters; the "
      "flat-vol fit averages the smile and keeps the residual as rmse.")
