"""Fit a raw-parameterization smile per expiry and interpolate prices.

Builds synthetic quotes from known smile parameters, refits them, checks the
butterfly (convexity) condition and prices an option between the fitted
maturities by total-variance interpolation.
"""

import datetime as dt

import numpy as np

from volhedge.pricing import OptionSpec
from volhedge.vol_surface import (QuoteRow, SviSlice, butterfly_check,
                                  fit_svi_surface, interp_price,
                                  svi_implied_vol)

F0 = 30_000.0
DAY = dt.date(2020, 1, 6)

# one smile per expiry: (days, a, b, rho, m, sigma)
TRUE_SLICES = [
    (30, 0.020, 0.04, -0.30, 0.00, 0.30),
    (90, 0.055, 0.05, -0.30, 0.00, 0.35),
    (180, 0.110, 0.06, -0.25, 0.02, 0.40),
]

quotes = []
for days, a, b, rho, m, sig in TRUE_SLICES:
    tau = days / 365.0
    truth = SviSlice(tau=tau, a=a, b=b, rho=rho, m=m, sigma=sig)
    for k in np.linspace(-0.45, 0.45, 11):
        quotes.append(QuoteRow(DAY, DAY + dt.timedelta(days=days),
                               float(F0 * np.exp(k)), "C",
                               float(svi_implied_vol(k, truth)), 10.0, F0))

surface = fit_svi_surface(quotes, seed=3)
print(f"fitted {len(surface.slices)} slices, f0 = {surface.f0:.0f}")
for sl in surface.slices:
    ok, min_g = butterfly_check(sl)
    print(f"  tau {sl.tau:.3f}: a={sl.a:+.4f} b={sl.b:.4f} rho={sl.rho:+.3f} "
          f"m={sl.m:+.4f} sigma={sl.sigma:.3f}  butterfly "
          f"{'ok' if ok else 'VIOLATED'} (min g {min_g:.2e})")

# total ATM variance must grow with maturity for a calendar-arbitrage-free
# surface; the constructor enforces it
print("\nATM total variance by maturity:",
      [f"{w:.4f}" for w in surface.theta_atm])

spec = OptionSpec(strike=F0, tau=60 / 365)
print(f"\n2M ATM call interpolated between the 1M and 3M slices: "
      f"{interp_price(surface, spec, 0.0):,.2f}")
