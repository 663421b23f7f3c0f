"""Hedge-quality measures and the rolling historical backtest.

Performance of a hedged short option book is summarized on the discounted
relative P&L sample: its two-sided expected shortfalls (lower tail for
beta below one half, upper tail above), the extremes, and the hedge error
(100 times the sample standard deviation). The backtest writes a fresh
at-the-money call every day of a segment, prices it off that day's smile
surface, delta-hedges it along the realized price path with the hedge
volatility re-read from each day's surface, and records the terminal P&L
at the 60-day expiry.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DomainError
from .pricing import OptionSpec, bs_greeks, implied_vol
from .scenarios import DT_DAILY
from .vol_surface import SviSurface, interp_price

__all__ = [
    "HedgeReport",
    "BacktestResult",
    "relative_pnl",
    "hedge_error",
    "expected_shortfall",
    "build_report",
    "write_plot_csv",
    "run_backtest",
]

logger = logging.getLogger(__name__)

BACKTEST_EXPIRY_DAYS = 60


def relative_pnl(pnl, premium: float, r: float = 0.0, tau: float = 0.0):
    """Discounted terminal P&L per unit of premium received."""
    if not premium > 0:
        raise DomainError("relative_pnl: premium must be positive")
    return np.exp(-r * tau) * np.asarray(pnl, dtype=float) / premium


def hedge_error(rel_pnl) -> float:
    """100 times the sample standard deviation (unbiased variance)."""
    rel = np.asarray(rel_pnl, dtype=float)
    if rel.size < 2:
        raise DomainError("hedge_error: need at least two observations")
    return float(100.0 * rel.std(ddof=1))


def expected_shortfall(values, beta: float) -> float:
    """Two-sided tail mean at level beta.

    Below one half this is the mean of all values not exceeding the
    empirical beta-quantile (the order statistic at ceil(beta n)), the
    conventional lower-tail expected shortfall; at or above one half, the
    mean of all values from that quantile up.
    """
    if not 0.0 < beta < 1.0:
        raise DomainError("expected_shortfall: beta must lie in (0, 1)")
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise DomainError("expected_shortfall: empty sample")
    q = v[int(np.ceil(beta * v.size - 1e-9)) - 1]
    tail = v[v <= q] if beta < 0.5 else v[v >= q]
    return float(tail.mean())


@dataclass(frozen=True)
class HedgeReport:
    """Tail and dispersion summary of one strategy/model/world combination.

    ``plot_sample`` is the relative P&L sample truncated to its 5%-95%
    quantile range, the convention used for distribution plots.
    """

    rel_pnl: np.ndarray
    hedge_error: float
    es_lower: float
    es_upper: float
    min: float
    max: float
    strategy: str
    model: str
    simulator: str
    segment: str
    plot_sample: np.ndarray = field(repr=False)

    def __post_init__(self):
        med = float(np.median(self.rel_pnl))
        if not (self.min <= self.es_lower <= med <= self.es_upper <= self.max):
            raise DomainError("HedgeReport: tail statistics out of order")

    @property
    def n(self) -> int:
        return int(self.rel_pnl.size)

    def to_json_dict(self) -> dict:
        return {
            "segment": self.segment,
            "simulator": self.simulator,
            "model": self.model,
            "strategy": self.strategy,
            "n": self.n,
            "min": self.min,
            "es05": self.es_lower,
            "es95": self.es_upper,
            "max": self.max,
            "hedge_error": self.hedge_error,
        }


def build_report(rel_pnl, strategy: str = "", model: str = "",
                 simulator: str = "", segment: str = "") -> HedgeReport:
    """Summarize a relative P&L sample. A single observation carries no
    dispersion, so its hedge error is reported as zero."""
    rel = np.asarray(rel_pnl, dtype=float).ravel()
    if rel.size == 0:
        raise DomainError("build_report: empty sample")
    q05, q95 = np.quantile(rel, [0.05, 0.95])
    return HedgeReport(
        rel_pnl=rel,
        hedge_error=hedge_error(rel) if rel.size >= 2 else 0.0,
        es_lower=expected_shortfall(rel, 0.05),
        es_upper=expected_shortfall(rel, 0.95),
        min=float(rel.min()),
        max=float(rel.max()),
        strategy=strategy, model=model, simulator=simulator, segment=segment,
        plot_sample=rel[(rel >= q05) & (rel <= q95)])


def write_plot_csv(path, report: HedgeReport) -> None:
    """Persist the quantile-truncated sample with its labels, one value a
    row, ready for any plotting front end."""
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment", "simulator", "model", "strategy",
                         "rel_pnl"])
        for value in report.plot_sample:
            writer.writerow([report.segment, report.simulator, report.model,
                             report.strategy, repr(float(value))])


# ---------------------------------------------------------------------------
# rolling historical backtest


@dataclass(frozen=True)
class BacktestResult:
    """P&L sample of the rolling daily-inception backtest, with the
    inception dates that produced it and the (date, reason) pairs that were
    skipped."""

    pnl: np.ndarray
    rel_pnl: np.ndarray
    premiums: np.ndarray
    inceptions: tuple
    skipped: tuple


def _surface_vol(surface: SviSurface, strike: float, tau: float,
                 r: float) -> float:
    """Hedge volatility read off a surface: invert the interpolated price.
    Maturities beyond the fitted range hold the nearest slice's smile."""
    taus = surface.taus
    tau_q = float(np.clip(tau, taus[0], taus[-1]))
    spec = OptionSpec(strike=strike, tau=tau_q)
    price = interp_price(surface, spec, r)
    return implied_vol(price, surface.f0, spec, r)


def run_backtest(dates: Sequence[dt.date], closes,
                 surfaces: Mapping[dt.date, SviSurface], r: float = 0.0,
                 expiry_days: int = BACKTEST_EXPIRY_DAYS) -> BacktestResult:
    """Write one at-the-money call per day and delta-hedge it to expiry.

    Each day with a fitted surface incepts a call struck at that day's
    close and expiring ``expiry_days`` calendar days later, premium marked
    off the day's surface. The short position is delta-hedged daily with
    the Black-Scholes ratio at the hedge volatility re-read every day from
    the most recent available surface (parameters recalibrate daily).
    Days are skipped, with a log line, when no surface exists, the price
    path to expiry has calendar gaps, or history ends before expiry.
    """
    closes = np.asarray(closes, dtype=float)
    if len(dates) != closes.size:
        raise DomainError("run_backtest: dates and closes must align")
    if np.any(closes <= 0):
        raise DomainError("run_backtest: closes must be positive")
    if expiry_days < 1:
        raise DomainError("run_backtest: expiry_days must be >= 1")

    tau0 = expiry_days * DT_DAILY
    index_of = {d: i for i, d in enumerate(dates)}
    pnl, rels, premiums, used, skipped = [], [], [], [], []

    for i, day in enumerate(dates):
        if i + expiry_days >= len(dates):
            break
        expiry_date = day + dt.timedelta(days=expiry_days)
        if index_of.get(expiry_date) != i + expiry_days or any(
                dates[i + j] + dt.timedelta(days=1) != dates[i + j + 1]
                for j in range(expiry_days)):
            skipped.append((day, "calendar gap before expiry"))
            logger.warning("backtest: %s skipped, calendar gap before the "
                           "%s expiry", day, expiry_date)
            continue
        surface = surfaces.get(day)
        if surface is None:
            skipped.append((day, "no surface"))
            logger.warning("backtest: %s skipped, no fitted surface", day)
            continue

        strike = closes[i]
        premium = interp_price(surface, OptionSpec(strike=strike, tau=tau0),
                               r)
        xi = 0.0
        money = premium
        bank = 1.0
        last_surface = surface
        for j in range(expiry_days):
            s_t = closes[i + j]
            tau_left = (expiry_days - j) * DT_DAILY
            last_surface = surfaces.get(dates[i + j], last_surface)
            sigma = _surface_vol(last_surface, strike, tau_left, r)
            spec = OptionSpec(strike=strike, tau=tau_left)
            delta = bs_greeks(s_t, spec, r, sigma)[0]
            if j > 0:
                bank *= np.exp(r * DT_DAILY)
            money -= (delta - xi) * s_t / bank
            xi = delta
        bank *= np.exp(r * DT_DAILY)
        s_t = closes[i + expiry_days]
        value = xi * s_t + money * bank
        pi = value - max(s_t - strike, 0.0)
        pnl.append(pi)
        premiums.append(premium)
        rels.append(float(relative_pnl(pi, premium, r, tau0)))
        used.append(day)

    return BacktestResult(pnl=np.asarray(pnl), rel_pnl=np.asarray(rels),
                          premiums=np.asarray(premiums),
                          inceptions=tuple(used), skipped=tuple(skipped))
