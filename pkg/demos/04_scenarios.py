"""Generate price scenarios two ways and compare their statistics.

The parametric generator discretizes the correlated-jump dynamics under the
pricing measure; the bootstrap generator filters a return history with a
GARCH(1,1) recursion and resamples the de-garched residuals through a
Gaussian kernel. One is forward-looking, the other replays the data's own
distribution.
"""

import numpy as np

from volhedge.models import SvcjParams
from volhedge.scenarios import (KdeSampler, fit_garch11, kde_density,
                                log_returns, simulate_garch_kde,
                                simulate_svcj)

S0 = 8000.0
N_PATHS, N_STEPS = 5000, 90

params = SvcjParams(kappa=0.75, theta=0.38, sigma_v=0.83, rho=0.28, v0=0.30,
                    lam=0.85, mu_s=-0.30, sigma_s=0.0, mu_v=0.99)
svcj = simulate_svcj(params, s0=S0, r=0.0, n_paths=N_PATHS, n_steps=N_STEPS,
                     seed=1)

# synthetic "history": one long path from the same dynamics stands in for a
# daily close series
history = simulate_svcj(params, s0=S0, r=0.0, n_paths=1, n_steps=500,
                        seed=2).prices[0]
fit = fit_garch11(log_returns(history))
print(f"garch fit: omega {fit.omega:.2e}, alpha {fit.alpha:.3f}, "
      f"beta {fit.beta:.3f} (persistence {fit.alpha + fit.beta:.3f})")

sampler = KdeSampler(fit.residuals, h=0.2)
grid = np.linspace(-8, 8, 2001)
print(f"residual density integrates to "
      f"{np.trapezoid(kde_density(sampler, grid), grid):.8f}")

kde = simulate_garch_kde(fit, sampler, s0=float(history[-1]),
                         n_paths=N_PATHS, n_steps=N_STEPS, seed=3)

for name, paths in (("jump-diffusion", svcj), ("garch-kde", kde)):
    term = paths.prices[:, -1] / paths.s0
    rets = np.log(paths.prices[:, 1:] / paths.prices[:, :-1]).ravel()
    print(f"\n{name}: terminal S_T/S_0 mean {term.mean():.4f}, "
          f"5% quantile {np.quantile(term, 0.05):.3f}, "
          f"95% quantile {np.quantile(term, 0.95):.3f}")
    print(f"  daily log-return stdev {rets.std():.4f}, "
          f"skew {3 * (rets.mean() - np.median(rets)) / rets.std():+.3f}, "
          f"min {rets.min():+.3f}")
    print(f"  all positive: {bool(np.all(paths.prices > 0))}, "
          f"variance grid recorded: {paths.variances is not None}")

print("\nThe jump model owns the deep left tail (variance-correlated "
      "crashes); the bootstrap stays closer to what the history showed.")
