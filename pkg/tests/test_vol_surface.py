"""Smile slices: evaluation, arbitrage checks, fitting, maturity interpolation.

The butterfly test for the known violating slice is cross-checked with an
independent oracle: discrete convexity of Black-Scholes call prices generated
from that slice. The published per-segment smile rows and ATM prices used
here live in conftest.
"""

import datetime as dt

import numpy as np
import pytest

from conftest import SEGMENT_ATM_CALLS, SEGMENT_SPOT, SVI_SEGMENT_ROWS, segment_surface
from volhedge.errors import DomainError, ExtrapolationError
from volhedge.pricing import OptionSpec, bs_price, implied_vol
from volhedge.vol_surface import (
    MIN_SURFACE_TAU,
    QuoteRow,
    SviSlice,
    SviSurface,
    butterfly_check,
    dedupe_quotes,
    fit_svi_slice,
    fit_svi_surface,
    interp_price,
    svi_implied_vol,
    svi_total_variance,
)

ALL_SEGMENT_SLICES = [
    pytest.param(SviSlice(tau=t, a=a, b=b, rho=rho, m=m, sigma=sig),
                 id=f"{seg}-{t}")
    for seg, rows in SVI_SEGMENT_ROWS.items()
    for t, a, b, rho, m, sig in rows
]


def convexity_oracle_min_second_diff(sl, s0=1.0, r=0.0, n=301):
    """Discrete butterfly spread value: second difference of call prices on a
    uniform strike grid. Negative values certify butterfly arbitrage."""
    strikes = np.linspace(0.5 * s0, 2.0 * s0, n)
    k = np.log(strikes / s0)
    vols = svi_implied_vol(k, sl)
    calls = np.array([
        bs_price(s0, OptionSpec(strike=K, tau=sl.tau), r, max(v, 1e-8))
        for K, v in zip(strikes, vols)
    ])
    return float(np.min(np.diff(calls, 2)))


# ---------------------------------------------------------------------------
# slice evaluation


def test_total_variance_hand_value():
    sl = SviSlice(tau=0.01, a=0.17, b=0.10, rho=0.0, m=0.0, sigma=1.00)
    assert svi_total_variance(0.0, sl) == pytest.approx(0.27, abs=1e-15)


def test_flat_slice_is_constant():
    sl = SviSlice(tau=0.5, a=0.09, b=0.0, rho=0.3, m=-0.2, sigma=0.4)
    k = np.linspace(-3, 3, 41)
    w = svi_total_variance(k, sl)
    assert np.allclose(w, 0.09, atol=1e-15)
    assert np.allclose(svi_implied_vol(k, sl), np.sqrt(0.09 / 0.5), atol=1e-15)


def test_wing_slope_limits():
    sl = SviSlice(tau=0.5, a=0.04, b=0.22, rho=-0.35, m=0.1, sigma=0.3)
    k = 1e4
    right = svi_total_variance(k + 1, sl) - svi_total_variance(k, sl)
    left = svi_total_variance(-k - 1, sl) - svi_total_variance(-k, sl)
    assert right == pytest.approx(sl.b * (1 + sl.rho), abs=1e-6)
    assert left == pytest.approx(sl.b * (1 - sl.rho), abs=1e-6)


def test_slice_invariants():
    with pytest.raises(DomainError):
        SviSlice(tau=0.5, a=0.04, b=-0.1, rho=0.0, m=0.0, sigma=0.3)
    with pytest.raises(DomainError):
        SviSlice(tau=0.5, a=0.04, b=0.1, rho=1.0, m=0.0, sigma=0.3)
    with pytest.raises(DomainError):
        SviSlice(tau=0.5, a=0.04, b=0.1, rho=0.0, m=0.0, sigma=0.0)
    # minimum total variance a + b sigma sqrt(1-rho^2) must be nonnegative
    with pytest.raises(DomainError):
        SviSlice(tau=0.5, a=-0.1, b=0.1, rho=0.0, m=0.0, sigma=0.3)


# ---------------------------------------------------------------------------
# butterfly check


def test_butterfly_flat_slice_g_is_one():
    sl = SviSlice(tau=1.0, a=0.04, b=0.0, rho=0.0, m=0.0, sigma=0.5)
    ok, min_g = butterfly_check(sl)
    assert ok
    assert min_g == pytest.approx(1.0, abs=1e-12)


def test_butterfly_known_violation_confirmed_by_price_convexity():
    # steep wings relative to the level: the classical inverted-density wing
    sl = SviSlice(tau=1.0, a=0.04, b=0.8, rho=0.0, m=0.0, sigma=0.1)
    ok, min_g = butterfly_check(sl)
    assert not ok
    assert min_g < -1e-3
    assert convexity_oracle_min_second_diff(sl) < -1e-8


@pytest.mark.parametrize("sl", ALL_SEGMENT_SLICES)
def test_butterfly_published_slices_pass(sl):
    ok, min_g = butterfly_check(sl)
    assert ok, f"min g = {min_g}"
    # sanity: the discrete-convexity oracle agrees on a passing slice
    assert convexity_oracle_min_second_diff(sl) > -1e-12


# ---------------------------------------------------------------------------
# slice fitting


def test_fit_recovers_exact_slice():
    src = SviSlice(tau=0.03, a=0.01, b=0.05, rho=-0.39, m=0.01, sigma=0.16)
    k = np.linspace(-0.4, 0.4, 15)
    w = svi_total_variance(k, src)
    fit = fit_svi_slice(np.column_stack([k, w]), tau=0.03, seed=3)
    assert fit.a == pytest.approx(src.a, abs=1e-6)
    assert fit.b == pytest.approx(src.b, abs=1e-6)
    assert fit.rho == pytest.approx(src.rho, abs=1e-6)
    assert fit.m == pytest.approx(src.m, abs=1e-6)
    assert fit.sigma == pytest.approx(src.sigma, abs=1e-6)
    rmse = np.sqrt(np.mean((svi_total_variance(k, fit) - w) ** 2))
    assert rmse < 1e-8


def test_fit_flat_quotes():
    k = np.linspace(-0.5, 0.5, 9)
    w = np.full_like(k, 0.0484)  # 22% vol at tau = 1
    fit = fit_svi_slice(np.column_stack([k, w]), tau=1.0, seed=1)
    assert np.max(np.abs(svi_total_variance(k, fit) - 0.0484)) < 1e-7
    assert fit.b < 1e-3


def test_fit_underdetermined():
    k = np.array([-0.2, -0.1, 0.0, 0.1])
    w = np.full_like(k, 0.05)
    with pytest.raises(DomainError):
        fit_svi_slice(np.column_stack([k, w]), tau=0.25)
    # repeated strikes do not count twice
    k5 = np.array([-0.2, -0.1, 0.0, 0.1, 0.1])
    with pytest.raises(DomainError):
        fit_svi_slice(np.column_stack([k5, np.full_like(k5, 0.05)]), tau=0.25)


def test_fit_output_passes_butterfly(rng):
    src = SviSlice(tau=0.16, a=0.06, b=0.15, rho=-0.50, m=-0.17, sigma=0.54)
    k = np.linspace(-0.6, 0.6, 21)
    w = svi_total_variance(k, src) * (1 + 0.01 * rng.standard_normal(k.size))
    fit = fit_svi_slice(np.column_stack([k, np.maximum(w, 1e-6)]), tau=0.16, seed=5)
    ok, min_g = butterfly_check(fit)
    assert ok, f"min g = {min_g}"


def test_fit_respects_calendar_floor():
    prev = SviSlice(tau=0.07, a=0.013, b=0.04, rho=0.0, m=-0.01, sigma=0.08)
    k = np.linspace(-0.5, 0.5, 17)
    # quotes sit below the shorter slice: the penalty should lift the fit
    w_target = 0.9 * svi_total_variance(k, prev)
    fit = fit_svi_slice(np.column_stack([k, w_target]), tau=0.16,
                        prev_slice=prev, seed=7)
    pen_k = np.linspace(-1.5, 1.5, 161)
    gap = svi_total_variance(pen_k, fit) - svi_total_variance(pen_k, prev)
    assert float(np.min(gap)) > -1e-4


# ---------------------------------------------------------------------------
# surface assembly and interpolation


def test_surface_validation():
    sl1 = SviSlice(tau=0.1, a=0.02, b=0.0, rho=0.0, m=0.0, sigma=0.3)
    sl2 = SviSlice(tau=0.2, a=0.04, b=0.0, rho=0.0, m=0.0, sigma=0.3)
    SviSurface(slices=(sl1, sl2), f0=100.0)
    with pytest.raises(DomainError):
        SviSurface(slices=(sl2, sl1), f0=100.0)  # taus must increase
    with pytest.raises(DomainError):
        SviSurface(slices=(sl2.__class__(tau=0.1, a=0.05, b=0.0, rho=0.0,
                                         m=0.0, sigma=0.3), sl1), f0=100.0)
    with pytest.raises(DomainError):
        SviSurface(slices=(), f0=100.0)
    with pytest.raises(DomainError):
        SviSurface(slices=(sl1,), f0=0.0)


def test_interp_at_slice_maturity_is_slice_price():
    surf = segment_surface("bullish")
    f0 = surf.f0
    sl = surf.slices[2]
    strike = 1.1 * f0
    vol = float(svi_implied_vol(np.log(strike / f0), sl))
    direct = bs_price(f0, OptionSpec(strike=strike, tau=sl.tau), 0.0, vol)
    via_surface = interp_price(surf, OptionSpec(strike=strike, tau=sl.tau), 0.0)
    assert via_surface == pytest.approx(direct, abs=1e-12)


def test_interp_round_trip_implied_vol():
    surf = segment_surface("calm")
    sl = surf.slices[1]
    strike = 0.95 * surf.f0
    spec = OptionSpec(strike=strike, tau=sl.tau)
    price = interp_price(surf, spec, 0.0)
    iv = implied_vol(price, surf.f0, spec, 0.0)
    assert iv == pytest.approx(float(svi_implied_vol(np.log(strike / surf.f0), sl)),
                               abs=1e-8)


def test_interp_price_between_bracketing_slice_prices():
    surf = segment_surface("covid")
    spec_lo = OptionSpec(strike=surf.f0, tau=surf.slices[2].tau)
    spec_hi = OptionSpec(strike=surf.f0, tau=surf.slices[3].tau)
    p_lo = interp_price(surf, spec_lo, 0.0)
    p_hi = interp_price(surf, spec_hi, 0.0)
    for t in np.linspace(spec_lo.tau + 1e-6, spec_hi.tau - 1e-6, 13):
        p = interp_price(surf, OptionSpec(strike=surf.f0, tau=float(t)), 0.0)
        assert min(p_lo, p_hi) - 1e-12 <= p <= max(p_lo, p_hi) + 1e-12


def test_interp_flat_theta_stays_on_near_slice():
    sl1 = SviSlice(tau=0.1, a=0.04, b=0.0, rho=0.0, m=0.0, sigma=0.3)
    sl2 = SviSlice(tau=0.3, a=0.04, b=0.0, rho=0.0, m=0.0, sigma=0.3)
    surf = SviSurface(slices=(sl1, sl2), f0=100.0)
    spec = OptionSpec(strike=100.0, tau=0.2)
    near = bs_price(100.0, OptionSpec(strike=100.0, tau=0.1), 0.0,
                    np.sqrt(0.04 / 0.1))
    assert interp_price(surf, spec, 0.0) == pytest.approx(near, abs=1e-12)


def test_interp_monotone_in_strike_and_maturity():
    surf = segment_surface("bullish")
    taus = np.linspace(surf.taus[0], surf.taus[-1], 9)
    strikes = surf.f0 * np.linspace(0.7, 1.4, 11)
    grid = np.array([
        [interp_price(surf, OptionSpec(strike=float(K), tau=float(t)), 0.0)
         for K in strikes]
        for t in taus
    ])
    assert np.all(np.diff(grid, axis=1) <= 1e-10)   # nonincreasing in strike
    assert np.all(np.diff(grid, axis=0) >= -1e-10)  # nondecreasing in maturity


def test_interp_rejects_extrapolation():
    surf = segment_surface("calm")
    with pytest.raises(ExtrapolationError):
        interp_price(surf, OptionSpec(strike=surf.f0, tau=surf.taus[0] / 2), 0.0)
    with pytest.raises(ExtrapolationError):
        interp_price(surf, OptionSpec(strike=surf.f0, tau=surf.taus[-1] + 0.1), 0.0)


@pytest.mark.parametrize("segment", ["bullish", "calm", "covid"])
def test_published_atm_prices_reproduced(segment):
    # published values come from unrounded parameters; 10% headroom
    surf = segment_surface(segment)
    target_1m, target_3m = SEGMENT_ATM_CALLS[segment]
    f0 = SEGMENT_SPOT[segment]
    p1 = interp_price(surf, OptionSpec(strike=f0, tau=30 / 365), 0.0)
    p3 = interp_price(surf, OptionSpec(strike=f0, tau=90 / 365), 0.0)
    assert abs(p1 - target_1m) / target_1m < 0.10
    assert abs(p3 - target_3m) / target_3m < 0.10


# ---------------------------------------------------------------------------
# quote handling and the full fitting pipeline


def test_quote_row_validation():
    day = dt.date(2019, 4, 1)
    QuoteRow(date=day, expiry=day + dt.timedelta(days=30), strike=4000.0,
             type="C", iv_mid=0.8, volume=1.0, underlying=4088.16)
    with pytest.raises(DomainError):
        QuoteRow(date=day, expiry=day + dt.timedelta(days=30), strike=4000.0,
                 type="call", iv_mid=0.8, volume=1.0, underlying=4088.16)
    with pytest.raises(DomainError):
        QuoteRow(date=day, expiry=day - dt.timedelta(days=1), strike=4000.0,
                 type="C", iv_mid=0.8, volume=1.0, underlying=4088.16)
    with pytest.raises(DomainError):
        QuoteRow(date=day, expiry=day + dt.timedelta(days=30), strike=4000.0,
                 type="C", iv_mid=0.0, volume=1.0, underlying=4088.16)


def test_dedupe_keeps_max_volume():
    day = dt.date(2019, 4, 1)
    expiry = day + dt.timedelta(days=30)
    mk = lambda vol, iv: QuoteRow(date=day, expiry=expiry, strike=4000.0,
                                  type="C", iv_mid=iv, volume=vol,
                                  underlying=4088.16)
    rows = [mk(5.0, 0.80), mk(9.0, 0.85), mk(2.0, 0.90)]
    out = dedupe_quotes(rows)
    assert len(out) == 1
    assert out[0].iv_mid == 0.85


def test_fit_surface_pipeline():
    day = dt.date(2019, 10, 1)
    f0 = 8367.51
    sources = {
        11: SviSlice(tau=11 / 365, a=0.01, b=0.05, rho=-0.39, m=0.01, sigma=0.16),
        26: SviSlice(tau=26 / 365, a=0.01, b=0.10, rho=-0.02, m=0.12, sigma=0.32),
        58: SviSlice(tau=58 / 365, a=0.06, b=0.15, rho=-0.50, m=-0.17, sigma=0.54),
    }
    quotes = []
    strikes = f0 * np.exp(np.linspace(-0.35, 0.35, 11))
    for days, sl in sources.items():
        expiry = day + dt.timedelta(days=days)
        for K in strikes:
            iv = float(svi_implied_vol(np.log(K / f0), sl))
            quotes.append(QuoteRow(date=day, expiry=expiry, strike=float(K),
                                   type="C", iv_mid=iv, volume=1.0,
                                   underlying=f0))
    # a stale duplicate, a too-short expiry and a sparse expiry all drop out
    quotes.append(QuoteRow(date=day, expiry=day + dt.timedelta(days=26),
                           strike=float(strikes[0]), type="C", iv_mid=0.01,
                           volume=0.0, underlying=f0))
    for K in strikes:
        quotes.append(QuoteRow(date=day, expiry=day + dt.timedelta(days=4),
                               strike=float(K), type="C", iv_mid=0.9,
                               volume=1.0, underlying=f0))
    for K in strikes[:4]:
        quotes.append(QuoteRow(date=day, expiry=day + dt.timedelta(days=120),
                               strike=float(K), type="C", iv_mid=0.9,
                               volume=1.0, underlying=f0))

    surf = fit_svi_surface(quotes, n_starts=8, seed=11)
    assert surf.date == day
    assert surf.f0 == pytest.approx(f0)
    assert len(surf.slices) == 3
    assert np.all(np.diff(surf.theta_atm) >= -1e-10)
    k = np.linspace(-0.35, 0.35, 11)
    for days, sl in sources.items():
        fit = surf.slices[[11, 26, 58].index(days)]
        assert fit.tau == pytest.approx(days / 365)
        rmse = np.sqrt(np.mean((svi_total_variance(k, fit)
                                - svi_total_variance(k, sl)) ** 2))
        assert rmse < 1e-6


def test_fit_surface_requires_single_date():
    day = dt.date(2019, 10, 1)
    q1 = QuoteRow(date=day, expiry=day + dt.timedelta(days=30), strike=8000.0,
                  type="C", iv_mid=0.7, volume=1.0, underlying=8367.51)
    q2 = QuoteRow(date=day + dt.timedelta(days=1),
                  expiry=day + dt.timedelta(days=30), strike=8000.0,
                  type="C", iv_mid=0.7, volume=1.0, underlying=8367.51)
    with pytest.raises(DomainError):
        fit_svi_surface([q1, q2])
    with pytest.raises(DomainError):
        fit_svi_surface([])
