"""Raw-parameterisation implied-volatility smiles and maturity interpolation.

A slice stores total variance w(k) = a + b (rho (k - m) + sqrt((k - m)^2 +
sigma^2)) over log moneyness k. Slices are fitted per expiry by a penalised
multi-start simplex search; a surface stitches slices together and prices
between maturities by total-variance-weighted mixing of the bracketing
Black-Scholes values.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import DomainError, ExtrapolationError, FitError
from .pricing import OptionSpec, bs_price

__all__ = [
    "QuoteRow",
    "SviSlice",
    "SviSurface",
    "MIN_SURFACE_TAU",
    "svi_total_variance",
    "svi_implied_vol",
    "butterfly_check",
    "fit_svi_slice",
    "interp_price",
    "dedupe_quotes",
    "fit_svi_surface",
]

# expiries closer than one week carry unstable smiles and are excluded
MIN_SURFACE_TAU = 7.0 / 365.0

_BUTTERFLY_TOL = -1e-10
_PENALTY_WEIGHT = 1e4


@dataclass(frozen=True)
class QuoteRow:
    """One option quote: mid implied vol plus trade context.

    ``type`` uses the feed's single-letter codes, "C" or "P".
    """

    date: dt.date
    expiry: dt.date
    strike: float
    type: str
    iv_mid: float
    volume: float
    underlying: float

    def __post_init__(self):
        if self.type not in ("C", "P"):
            raise DomainError(f"QuoteRow: type must be 'C' or 'P', got {self.type!r}")
        if not self.strike > 0:
            raise DomainError("QuoteRow: strike must be positive")
        if not self.iv_mid > 0:
            raise DomainError("QuoteRow: iv_mid must be positive")
        if self.volume < 0:
            raise DomainError("QuoteRow: volume must be nonnegative")
        if not self.underlying > 0:
            raise DomainError("QuoteRow: underlying must be positive")
        if self.expiry < self.date:
            raise DomainError("QuoteRow: expiry before quote date")

    @property
    def tau(self) -> float:
        return (self.expiry - self.date).days / 365.0


@dataclass(frozen=True)
class SviSlice:
    tau: float
    a: float
    b: float
    rho: float
    m: float
    sigma: float

    def __post_init__(self):
        if not self.tau > 0:
            raise DomainError("SviSlice: tau must be positive")
        if self.b < 0:
            raise DomainError("SviSlice: b must be nonnegative")
        if not -1 < self.rho < 1:
            raise DomainError("SviSlice: rho must lie in (-1, 1)")
        if not self.sigma > 0:
            raise DomainError("SviSlice: sigma must be positive")
        if self.a + self.b * self.sigma * np.sqrt(1 - self.rho**2) < 0:
            raise DomainError("SviSlice: minimum total variance is negative")


def _w_raw(k, a, b, rho, m, sigma):
    km = np.asarray(k, dtype=float) - m
    return a + b * (rho * km + np.sqrt(km * km + sigma * sigma))


def _g_raw(k, a, b, rho, m, sigma):
    """Density-positivity function; nonnegative everywhere iff the smile is
    free of butterfly arbitrage. Regions of nonpositive total variance map to
    -inf so they always count as violations."""
    k = np.asarray(k, dtype=float)
    km = k - m
    root = np.sqrt(km * km + sigma * sigma)
    w = a + b * (rho * km + root)
    wp = b * (rho + km / root)
    wpp = b * sigma * sigma / root**3
    with np.errstate(divide="ignore", invalid="ignore"):
        g = ((1.0 - k * wp / (2.0 * w)) ** 2
             - 0.25 * wp * wp * (1.0 / w + 0.25) + 0.5 * wpp)
    return np.where(w > 0, g, -np.inf)


def svi_total_variance(k, sl: SviSlice):
    """Total implied variance w(k) at log moneyness k."""
    return _w_raw(k, sl.a, sl.b, sl.rho, sl.m, sl.sigma)


def svi_implied_vol(k, sl: SviSlice):
    return np.sqrt(np.maximum(svi_total_variance(k, sl), 0.0) / sl.tau)


def butterfly_check(sl: SviSlice, n_points: int = 401):
    """Evaluate the arbitrage function on [m - 5 sigma, m + 5 sigma].

    Returns (passes, min_g); the slice passes iff min_g >= -1e-10.
    """
    k = np.linspace(sl.m - 5.0 * sl.sigma, sl.m + 5.0 * sl.sigma, n_points)
    g = _g_raw(k, sl.a, sl.b, sl.rho, sl.m, sl.sigma)
    min_g = float(np.min(g))
    return bool(min_g >= _BUTTERFLY_TOL), min_g


def _fit_objective(x, k, w, pen_k, prev_w):
    a, b, rho, m, sigma = x
    w_model = _w_raw(k, a, b, rho, m, sigma)
    err = np.mean((w_model - w) ** 2)
    # keep the candidate admissible: inside the parameter box, nonnegative
    # minimum variance, butterfly positivity and calendar ordering on the
    # penalty grid (the simplex itself is unconstrained)
    penalty = (min(b, 0.0) ** 2 + min(sigma - 1e-3, 0.0) ** 2
               + max(abs(rho) - 0.999, 0.0) ** 2)
    penalty += min(a + b * sigma * np.sqrt(max(1.0 - rho * rho, 0.0)), 0.0) ** 2
    g = _g_raw(pen_k, a, b, rho, m, sigma)
    g = np.clip(np.nan_to_num(g, nan=-1e3, neginf=-1e3), -1e3, None)
    penalty += np.sum(np.minimum(g, 0.0) ** 2)
    if prev_w is not None:
        pen_w = _w_raw(pen_k, a, b, rho, m, sigma)
        penalty += np.sum(np.minimum(pen_w - prev_w, 0.0) ** 2)
    return err + _PENALTY_WEIGHT * penalty


def fit_svi_slice(quotes, tau: float, prev_slice: Optional[SviSlice] = None,
                  n_starts: int = 16, seed: int = 0) -> SviSlice:
    """Fit one slice to (log moneyness, total variance) observations.

    ``quotes`` is an (n, 2) array-like of (k, w) pairs. Multi-start
    Nelder-Mead with quasi-random starts inside the parameter box; butterfly
    positivity, calendar ordering against ``prev_slice`` and the
    minimum-variance floor enter as quadratic penalties. Raises FitError
    (carrying the candidate on ``.best_fit``) if the converged slice still
    violates the arbitrage checks.
    """
    pairs = np.asarray(quotes, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DomainError("fit_svi_slice: quotes must be an (n, 2) array of (k, w)")
    k = pairs[:, 0].copy()
    w = pairs[:, 1].copy()
    if not tau > 0:
        raise DomainError("fit_svi_slice: tau must be positive")
    if np.unique(k).size < 5:
        raise DomainError("fit_svi_slice: at least 5 distinct strikes are "
                          "required for the 5 slice parameters")
    if np.any(w < 0):
        raise DomainError("fit_svi_slice: total variances must be nonnegative")

    w_max = float(np.max(w))
    k_lo, k_hi = float(np.min(k)), float(np.max(k))
    spread = max(k_hi - k_lo, 0.2)
    lower = np.array([-2.0 * w_max - 1e-6, 0.0, -0.999, k_lo - spread, 1e-3])
    upper = np.array([w_max + 1e-6, 4.0, 0.999, k_hi + spread, 3.0])

    pen_k = np.linspace(k_lo - 1.0, k_hi + 1.0, 161)
    prev_w = svi_total_variance(pen_k, prev_slice) if prev_slice is not None else None

    sampler = qmc.Sobol(d=5, scramble=True, seed=seed)
    starts = qmc.scale(sampler.random(n_starts), lower, upper)

    best_x, best_val = None, np.inf
    options = dict(maxiter=4000, maxfev=4000, xatol=1e-11, fatol=1e-15, adaptive=True)
    for x0 in starts:
        res = minimize(_fit_objective, x0, args=(k, w, pen_k, prev_w),
                       method="Nelder-Mead", options=options)
        if res.fun < best_val:
            best_x, best_val = res.x, res.fun
    # restarts re-expand the collapsed simplex around the incumbent, which
    # squeezes out the last few digits a single simplex pass leaves behind
    for _ in range(5):
        res = minimize(_fit_objective, best_x, args=(k, w, pen_k, prev_w),
                       method="Nelder-Mead", options=options)
        if res.fun < best_val:
            best_x, best_val = res.x, res.fun
        else:
            break

    a, b, rho, m, sigma = best_x
    b = max(b, 0.0)
    sigma = max(sigma, 1e-6)
    rho = float(np.clip(rho, -0.999, 0.999))
    floor = a + b * sigma * np.sqrt(1.0 - rho**2)
    if floor < 0:
        # tiny infeasibility left over from the penalty formulation
        if floor < -1e-8:
            err = FitError("fit_svi_slice: converged slice has negative minimum "
                           "total variance")
            err.best_fit = (float(a), float(b), rho, float(m), float(sigma))
            raise err
        a -= floor
    out = SviSlice(tau=tau, a=float(a), b=float(b), rho=rho, m=float(m),
                   sigma=float(sigma))
    ok, min_g = butterfly_check(out)
    if not ok:
        err = FitError(f"fit_svi_slice: no arbitrage-free fit found "
                       f"(min g = {min_g:.3e})")
        err.best_fit = out
        raise err
    return out


@dataclass(frozen=True)
class SviSurface:
    """Slices in strictly increasing maturity with a nondecreasing
    at-the-money total variance term structure; f0 is the forward/spot
    reference of the log-moneyness coordinate."""

    slices: tuple[SviSlice, ...]
    f0: float
    date: Optional[dt.date] = None

    def __post_init__(self):
        if len(self.slices) == 0:
            raise DomainError("SviSurface: at least one slice required")
        if not self.f0 > 0:
            raise DomainError("SviSurface: f0 must be positive")
        taus = np.array([sl.tau for sl in self.slices])
        if np.any(np.diff(taus) <= 0):
            raise DomainError("SviSurface: slice maturities must strictly increase")
        theta = self.theta_atm
        if np.any(np.diff(theta) < -1e-10):
            raise DomainError("SviSurface: at-the-money total variance must be "
                              "nondecreasing in maturity")

    @property
    def taus(self) -> np.ndarray:
        return np.array([sl.tau for sl in self.slices])

    @property
    def theta_atm(self) -> np.ndarray:
        return np.array([float(svi_total_variance(0.0, sl)) for sl in self.slices])


def _slice_bs_price(surface: SviSurface, sl: SviSlice, spec: OptionSpec,
                    r: float) -> float:
    k = np.log(spec.strike / surface.f0)
    vol = float(svi_implied_vol(k, sl))
    leg = OptionSpec(strike=spec.strike, tau=sl.tau, is_call=spec.is_call)
    return bs_price(surface.f0, leg, r, max(vol, 1e-8))


def interp_price(surface: SviSurface, spec: OptionSpec, r: float) -> float:
    """Price off the surface. Exact slice maturities price directly; in
    between, the two bracketing slice prices are mixed with total-variance
    weights alpha = (sqrt(th2) - sqrt(th_T)) / (sqrt(th2) - sqrt(th1))."""
    taus = surface.taus
    t = spec.tau
    if t < taus[0] - 1e-12 or t > taus[-1] + 1e-12:
        raise ExtrapolationError(
            f"maturity {t:.6g} outside surface range [{taus[0]:.6g}, {taus[-1]:.6g}]")
    hit = int(np.argmin(np.abs(taus - t)))
    if abs(taus[hit] - t) < 1e-12:
        return _slice_bs_price(surface, surface.slices[hit], spec, r)
    hi = int(np.searchsorted(taus, t))
    lo = hi - 1
    theta = surface.theta_atm
    frac = (t - taus[lo]) / (taus[hi] - taus[lo])
    theta_t = theta[lo] + (theta[hi] - theta[lo]) * frac
    denom = np.sqrt(theta[hi]) - np.sqrt(theta[lo])
    if denom < 1e-14:
        # flat term structure between the slices: stay on the near slice
        alpha = 1.0
    else:
        alpha = (np.sqrt(theta[hi]) - np.sqrt(theta_t)) / denom
    alpha = float(np.clip(alpha, 0.0, 1.0))
    near = _slice_bs_price(surface, surface.slices[lo], spec, r)
    far = _slice_bs_price(surface, surface.slices[hi], spec, r)
    return alpha * near + (1.0 - alpha) * far


def dedupe_quotes(quotes: Sequence[QuoteRow]) -> list[QuoteRow]:
    """Collapse duplicate (expiry, strike, type) rows to the max-volume row."""
    best: dict = {}
    for q in quotes:
        key = (q.expiry, q.strike, q.type)
        if key not in best or q.volume > best[key].volume:
            best[key] = q
    return [best[key] for key in sorted(best)]


def fit_svi_surface(quotes: Sequence[QuoteRow], min_tau: float = MIN_SURFACE_TAU,
                    n_starts: int = 16, seed: int = 0) -> SviSurface:
    """Fit one slice per quoted expiry (at or beyond ``min_tau``) and
    assemble the surface. Slices are fitted in ascending maturity order, each
    constrained against its predecessor so the calendar ordering holds by
    construction."""
    if not quotes:
        raise DomainError("fit_svi_surface: no quotes")
    dates = {q.date for q in quotes}
    if len(dates) != 1:
        raise DomainError("fit_svi_surface: quotes must share one valuation date")
    date = next(iter(dates))
    f0 = float(np.median([q.underlying for q in quotes]))
    rows = dedupe_quotes(quotes)

    by_expiry: dict = {}
    for q in rows:
        by_expiry.setdefault(q.expiry, []).append(q)

    slices = []
    prev = None
    for expiry in sorted(by_expiry):
        group = by_expiry[expiry]
        tau = group[0].tau
        if tau < min_tau:
            continue
        if len({q.strike for q in group}) < 5:
            continue
        pairs = np.array([[np.log(q.strike / f0), q.iv_mid**2 * tau] for q in group])
        sl = fit_svi_slice(pairs, tau, prev_slice=prev, n_starts=n_starts, seed=seed)
        slices.append(sl)
        prev = sl
    if not slices:
        raise FitError("fit_svi_surface: no expiry had enough usable quotes")
    return SviSurface(slices=tuple(slices), f0=f0, date=date)
