"""Hedge a short call on jump-diffusion paths with four strategies.

A 3M at-the-money call is written at the model price and hedged daily to
expiry. Delta alone cannot touch the vol-of-vol and jump risk, the
two-instrument books immunize a second Greek, and the variance-optimal
ratio accepts a little delta mismatch to cancel jump covariance.
"""

import numpy as np

from volhedge.analytics import (build_report, expected_shortfall,
                                relative_pnl)
from volhedge.hedging import (HedgeSpec, PricingContext,
                              default_second_instrument,
                              run_hedge_experiment)
from volhedge.models import BsParams, ModelParams, SvcjParams, SvParams
from volhedge.pricing import OptionSpec, carr_madan_price, implied_vol
from volhedge.scenarios import simulate_svcj

S0 = 100.0
WORLD = SvcjParams(kappa=0.75, theta=0.38, sigma_v=0.83, rho=0.28, v0=0.30,
                   lam=0.85, mu_s=-0.30, sigma_s=0.0, mu_v=0.99)

target = OptionSpec(strike=S0, tau=90 / 365)
paths = simulate_svcj(WORLD, s0=S0, r=0.0, n_paths=2000, n_steps=90, seed=14)

premium = carr_madan_price(ModelParams(params=WORLD, r=0.0, s0=S0), target)
sigma_mkt = implied_vol(premium, S0, target, 0.0)
print(f"premium {premium:.3f} (implied vol {sigma_mkt:.3f}), "
      f"{paths.n_paths} paths, daily rebalancing\n")

bs = ModelParams(params=BsParams(sigma=sigma_mkt), r=0.0, s0=S0)
sv = ModelParams(params=SvParams(kappa=WORLD.kappa, theta=WORLD.theta,
                                 sigma_v=WORLD.sigma_v, rho=WORLD.rho,
                                 v0=WORLD.v0), r=0.0, s0=S0)
svcj = ModelParams(params=WORLD, r=0.0, s0=S0)
second = default_second_instrument(S0, target)

BOOKS = [
    ("bs delta", HedgeSpec("delta", bs, target)),
    ("sv delta", HedgeSpec("delta", sv, target)),
    ("sv delta-gamma", HedgeSpec("delta_gamma", sv, target, second=second)),
    ("sv delta-vega", HedgeSpec("delta_vega", sv, target, second=second)),
    ("svcj min-variance", HedgeSpec("min_variance", svcj, target)),
]

ctx = PricingContext(premium=premium)
print(f"{'book':20s} {'err':>7s} {'es 5%':>8s} {'es 95%':>8s} "
      f"{'min':>8s} {'max':>7s}")
for name, spec in BOOKS:
    pnl = run_hedge_experiment(paths, spec, ctx=ctx)
    rel = relative_pnl(pnl, premium)
    rep = build_report(rel, strategy=spec.strategy, model=spec.family,
                       simulator="svcj", segment="demo")
    print(f"{name:20s} {rep.hedge_error:7.1f} {rep.es_lower:8.3f} "
          f"{rep.es_upper:8.3f} {rep.min:8.2f} {rep.max:7.2f}")

print("\nHedge error is 100 x stdev of P&L over premium; the tail columns "
      "are two-sided expected shortfall. Watch the 5% tail shrink once a "
      "second instrument carries the vol risk.")
