"""Calibration of model parameters to a day's option quotes.

The objective is the root-mean-square gap between model and market implied
vols plus a diagonal quadratic penalty that keeps parameters at a reasonable
magnitude. Model vols come from one transform-pricing pass per quoted expiry.
A multi-start constrained local search makes the multi-modal surfaces
tractable; the best start wins.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm, qmc

from .errors import ConvergenceError, DomainError, VolhedgeError
from .models import (
    BsParams, CgmyParams, JdParams, ModelParams, SvParams, SvcjParams,
    SvjParams, VgParams,
)
from .pricing import FftConfig, _implied_vol_soft, carr_madan_strike_prices
from .vol_surface import QuoteRow, dedupe_quotes

__all__ = [
    "CALIB_FFT",
    "CalibConfig",
    "CalibResult",
    "param_names",
    "params_from_theta",
    "default_calib_config",
    "filter_quotes",
    "calib_objective",
    "multistart_points",
    "calibrate",
]

# a coarser transform grid than the pricing default; calibration calls the
# pricer thousands of times and the interpolation error is far below the
# quote noise it fits
CALIB_FFT = FftConfig(alpha=1.5, n_grid=2048, eta=0.25)

_DELTA_BAND = (0.25, 0.75)
_FAILED_OBJECTIVE = 1e4

_PARAM_CLS = {
    "bs": BsParams, "jd": JdParams, "sv": SvParams, "svj": SvjParams,
    "svcj": SvcjParams, "vg": VgParams, "cgmy": CgmyParams,
}

_NAMES = {
    "bs": ("sigma",),
    "jd": ("sigma", "lam", "mu_s", "delta_s"),
    "sv": ("kappa", "theta", "sigma_v", "rho", "v0"),
    "svj": ("kappa", "theta", "sigma_v", "rho", "v0", "lam", "mu_s", "sigma_s"),
    "svcj": ("kappa", "theta", "sigma_v", "rho", "v0", "lam", "mu_s", "sigma_s",
             "mu_v"),
    "vg": ("sigma", "nu", "theta"),
    "cgmy": ("c", "g", "m", "y"),
}

_STARTS = {
    "sigma": 0.8, "lam": 0.5, "mu_s": -0.1, "delta_s": 0.2, "sigma_s": 0.2,
    "kappa": 1.5, "theta": 0.5, "sigma_v": 1.0, "rho": 0.0, "v0": 0.5,
    "mu_v": 0.4, "rho_j": 0.0, "nu": 0.5, "c": 5.0, "g": 10.0, "m": 10.0,
    "y": 0.5,
}
# vg theta is a drift, not a variance level
_START_OVERRIDES = {("vg", "theta"): -0.3}

_BOUNDS = {
    "sigma": (0.01, 5.0), "lam": (0.0, 10.0), "mu_s": (-1.0, 1.0),
    "delta_s": (1e-3, 2.0), "sigma_s": (1e-3, 2.0), "kappa": (1e-3, 20.0),
    "theta": (1e-4, 4.0), "sigma_v": (1e-3, 5.0), "rho": (-0.99, 0.99),
    "v0": (1e-4, 4.0), "mu_v": (1e-4, 4.0), "rho_j": (-0.99, 0.99),
    "nu": (1e-3, 5.0), "c": (1e-2, 50.0), "g": (0.05, 100.0),
    # the damping exponent needs finite moments: keep m clear of alpha + 1
    "m": (2.6, 100.0), "y": (0.01, 1.9),
}
_BOUND_OVERRIDES = {("vg", "theta"): (-2.0, 2.0)}

# reference magnitudes used to scale the quadratic penalty to O(1) per
# parameter
_REF = {
    "sigma": 1.0, "lam": 1.0, "mu_s": 0.5, "delta_s": 0.5, "sigma_s": 0.5,
    "kappa": 2.0, "theta": 1.0, "sigma_v": 1.0, "rho": 1.0, "v0": 1.0,
    "mu_v": 1.0, "rho_j": 1.0, "nu": 1.0, "c": 10.0, "g": 20.0, "m": 20.0,
    "y": 1.0,
}
_GAMMA_SCALE = 1e-4


def param_names(family: str, calibrate_rho_j: bool = False) -> tuple:
    if family not in _NAMES:
        raise DomainError(f"unknown model family {family!r}")
    names = _NAMES[family]
    if family == "svcj" and calibrate_rho_j:
        names = names + ("rho_j",)
    return names


def params_from_theta(family: str, theta, calibrate_rho_j: bool = False):
    """Build the family's parameter object from a flat vector."""
    names = param_names(family, calibrate_rho_j)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(names),):
        raise DomainError(f"{family} expects {len(names)} parameters, "
                          f"got shape {theta.shape}")
    return _PARAM_CLS[family](**dict(zip(names, theta)))


@dataclass(frozen=True)
class CalibConfig:
    family: str
    start: tuple
    bounds: tuple        # per-parameter (lo, hi)
    gamma_diag: tuple    # per-parameter quadratic penalty weights
    r: float = 0.0
    max_iter: int = 120
    tol: float = 1e-9
    n_starts: int = 8
    seed: int = 0
    calibrate_rho_j: bool = False
    fft: FftConfig = CALIB_FFT
    extra_starts: tuple = ()
    # callables theta -> value, feasible when value >= 0
    constraints: tuple = ()

    def __post_init__(self):
        names = param_names(self.family, self.calibrate_rho_j)
        n = len(names)
        if len(self.start) != n or len(self.bounds) != n or len(self.gamma_diag) != n:
            raise DomainError("CalibConfig: start, bounds and gamma_diag must "
                              f"all have {n} entries for family {self.family!r}")
        for g in self.gamma_diag:
            if g < 0:
                raise DomainError("CalibConfig: gamma_diag must be nonnegative")
        for (lo, hi), x0 in zip(self.bounds, self.start):
            if not lo < hi:
                raise DomainError("CalibConfig: bounds must satisfy lo < hi")
            if not lo <= x0 <= hi:
                raise DomainError("CalibConfig: start must lie within bounds")
        if self.n_starts < 1:
            raise DomainError("CalibConfig: n_starts must be positive")
        for xs in self.extra_starts:
            if len(xs) != n:
                raise DomainError("CalibConfig: extra start of wrong length")


@dataclass(frozen=True)
class CalibResult:
    params: ModelParams
    rmse: float
    n_quotes: int
    converged: bool
    objective: float

    def __post_init__(self):
        if self.rmse < 0:
            raise DomainError("CalibResult: rmse must be nonnegative")


def default_calib_config(family: str, r: float = 0.0,
                         calibrate_rho_j: bool = False, **overrides) -> CalibConfig:
    names = param_names(family, calibrate_rho_j)
    start = tuple(_START_OVERRIDES.get((family, nm), _STARTS[nm]) for nm in names)
    bounds = tuple(_BOUND_OVERRIDES.get((family, nm), _BOUNDS[nm]) for nm in names)
    gamma = overrides.pop(
        "gamma_diag", tuple(_GAMMA_SCALE / _REF[nm] ** 2 for nm in names))
    return CalibConfig(family=family, start=start, bounds=bounds,
                       gamma_diag=gamma, r=r, calibrate_rho_j=calibrate_rho_j,
                       **overrides)


def filter_quotes(quotes: Sequence[QuoteRow], r: float) -> list:
    """Keep rows with positive traded volume whose own-vol spot delta has
    absolute value inside [0.25, 0.75]."""
    lo, hi = _DELTA_BAND
    out = []
    for q in quotes:
        if not q.volume > 0:
            continue
        tau = q.tau
        if tau <= 0:
            continue
        sqrt_tau = np.sqrt(tau)
        d1 = (np.log(q.underlying / q.strike) + (r + 0.5 * q.iv_mid**2) * tau) \
            / (q.iv_mid * sqrt_tau)
        delta = norm.cdf(d1) if q.type == "C" else norm.cdf(d1) - 1.0
        if lo <= abs(delta) <= hi:
            out.append(q)
    return out


class _QuoteGrid:
    """Quotes regrouped for pricing: one (strikes, market vols) block per
    expiry, plus the shared spot reference."""

    def __init__(self, quotes: Sequence[QuoteRow]):
        if not quotes:
            raise DomainError("no quotes to calibrate on")
        self.s0 = float(np.median([q.underlying for q in quotes]))
        blocks: dict = {}
        for q in quotes:
            blocks.setdefault(q.tau, []).append(q)
        self.blocks = []
        for tau in sorted(blocks):
            rows = blocks[tau]
            strikes = np.array([q.strike for q in rows])
            ivs = np.array([q.iv_mid for q in rows])
            self.blocks.append((tau, strikes, ivs))
        self.n_quotes = sum(len(b[1]) for b in self.blocks)


def _objective_on_grid(family, theta, grid: _QuoteGrid, gamma, r, fft,
                       calibrate_rho_j):
    theta = np.asarray(theta, dtype=float)
    try:
        params = params_from_theta(family, theta, calibrate_rho_j)
        model = ModelParams(params=params, r=r, s0=grid.s0)
        sq_sum = 0.0
        for tau, strikes, market_ivs in grid.blocks:
            prices = carr_madan_strike_prices(model, tau, strikes, fft)
            model_ivs = _implied_vol_soft(prices, grid.s0, strikes, tau, r)
            sq_sum += float(np.sum((model_ivs - market_ivs) ** 2))
    except VolhedgeError:
        return np.inf
    rmse = np.sqrt(sq_sum / grid.n_quotes)
    return rmse + float(np.dot(np.asarray(gamma, dtype=float), theta**2))


def calib_objective(family: str, theta, quotes: Sequence[QuoteRow], gamma_diag,
                    r: float = 0.0, fft: FftConfig = CALIB_FFT,
                    calibrate_rho_j: bool = False) -> float:
    """Implied-vol RMSE plus the quadratic magnitude penalty theta' G theta.

    Pricing failures (parameters outside a family's admissible set, moment
    explosions) surface as +inf, which multi-start search treats as a dead
    region rather than an exception.
    """
    grid = _QuoteGrid(list(quotes))
    return _objective_on_grid(family, theta, grid, gamma_diag, r, fft,
                              calibrate_rho_j)


def multistart_points(cfg: CalibConfig) -> np.ndarray:
    """Deterministic start battery: the configured start, quasi-random points
    spread over the bounds box, then any warm starts supplied by the caller."""
    lower = np.array([b[0] for b in cfg.bounds])
    upper = np.array([b[1] for b in cfg.bounds])
    n_draw = max(cfg.n_starts - 1, 0)
    pts = [np.asarray(cfg.start, dtype=float)]
    if n_draw > 0:
        sampler = qmc.Sobol(d=len(cfg.bounds), scramble=True, seed=cfg.seed)
        # draw a power-of-two batch to keep the sequence balanced, then trim
        batch = sampler.random(1 << (n_draw - 1).bit_length())
        pts.extend(qmc.scale(batch[:n_draw], lower, upper))
    pts.extend(np.asarray(x, dtype=float) for x in cfg.extra_starts)
    return np.array(pts)


def calibrate(family: str, quotes: Sequence[QuoteRow],
              cfg: Optional[CalibConfig] = None) -> CalibResult:
    """Fit one family to a day's quotes.

    Applies the liquidity/moneyness filter and deduplication, then runs a
    bound-constrained local search from every start. Returns the best point
    found even when no single start reports clean convergence (converged
    flag False); raises only when the filtered quote set is empty or every
    start fails outright.
    """
    if cfg is None:
        cfg = default_calib_config(family)
    if cfg.family != family:
        raise DomainError(f"config family {cfg.family!r} does not match {family!r}")
    rows = dedupe_quotes(filter_quotes(quotes, cfg.r))
    if not rows:
        raise DomainError("calibrate: no quotes survive the liquidity and "
                          "moneyness filters")
    grid = _QuoteGrid(rows)
    gamma = np.asarray(cfg.gamma_diag, dtype=float)

    def fun(theta):
        val = _objective_on_grid(family, theta, grid, gamma, cfg.r, cfg.fft,
                                 cfg.calibrate_rho_j)
        # a finite plateau keeps finite-difference gradients defined
        return _FAILED_OBJECTIVE if not np.isfinite(val) else val

    constraints = [{"type": "ineq", "fun": c} for c in cfg.constraints]
    best_x, best_val, best_ok = None, np.inf, False
    n_finished = 0
    for x0 in multistart_points(cfg):
        x0 = np.clip(x0, [b[0] for b in cfg.bounds], [b[1] for b in cfg.bounds])
        start_val = fun(x0)
        if start_val < best_val:
            best_x, best_val, best_ok = x0, start_val, False
        try:
            with warnings.catch_warnings():
                # the solver clips finite-difference probes at the bounds and
                # warns about it; that is expected here
                warnings.filterwarnings(
                    "ignore", message="Values in x were outside bounds",
                    category=RuntimeWarning)
                res = minimize(fun, x0, method="SLSQP", bounds=cfg.bounds,
                               constraints=constraints,
                               options={"maxiter": cfg.max_iter, "ftol": cfg.tol})
        except (ValueError, FloatingPointError):
            continue
        n_finished += 1
        val = fun(res.x)
        if val < best_val:
            best_x, best_val, best_ok = np.asarray(res.x), val, bool(res.success)
    if n_finished == 0:
        raise ConvergenceError("calibrate: every start failed before returning "
                               "a candidate")
    params = params_from_theta(family, best_x, cfg.calibrate_rho_j)
    model = ModelParams(params=params, r=cfg.r, s0=grid.s0)
    penalty = float(np.dot(gamma, np.asarray(best_x) ** 2))
    rmse = best_val - penalty if np.isfinite(best_val) else np.inf
    return CalibResult(params=model, rmse=max(float(rmse), 0.0),
                       n_quotes=grid.n_quotes, converged=best_ok,
                       objective=float(best_val))
