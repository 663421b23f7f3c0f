"""Quote filtering, the vol-RMSE objective and multi-start calibration.

Synthetic surfaces are generated through the same transform pricer the
objective uses, so a model evaluated at its own generating parameters prices
the quotes back exactly; recovery and nesting claims then have a clean
yardstick.
"""

import datetime as dt

import numpy as np
import pytest

from conftest import SV_TYPICAL, make_model
from volhedge.calibration import (
    CALIB_FFT,
    CalibConfig,
    CalibResult,
    calib_objective,
    calibrate,
    default_calib_config,
    filter_quotes,
    multistart_points,
    param_names,
    params_from_theta,
)
from volhedge.errors import DomainError
from volhedge.models import BsParams, ModelParams, SvcjParams, VgParams, vg_to_cgm
from volhedge.pricing import FftConfig, _implied_vol_soft, carr_madan_strike_prices
from volhedge.vol_surface import QuoteRow

DAY = dt.date(2019, 10, 1)
FINE_FFT = FftConfig(alpha=1.5, n_grid=8192, eta=0.125)


def synth_quotes(model, days=(30, 90), k_half=0.25, n_strikes=7):
    """Quotes whose mid IVs are the model's own transform-priced vols."""
    out = []
    for d in days:
        tau = d / 365
        strikes = model.s0 * np.exp(np.linspace(-k_half, k_half, n_strikes))
        prices = carr_madan_strike_prices(model, tau, strikes, CALIB_FFT)
        ivs = _implied_vol_soft(prices, model.s0, strikes, tau, model.r)
        for K, iv in zip(strikes, ivs):
            out.append(QuoteRow(date=DAY, expiry=DAY + dt.timedelta(days=d),
                                strike=float(K), type="C", iv_mid=float(iv),
                                volume=1.0, underlying=model.s0))
    return out


def flat_quotes(sigma, s0=8367.51, days=(30, 90)):
    out = []
    for d in days:
        for rel in (0.85, 0.925, 1.0, 1.075, 1.15):
            out.append(QuoteRow(date=DAY, expiry=DAY + dt.timedelta(days=d),
                                strike=s0 * rel, type="C", iv_mid=sigma,
                                volume=1.0, underlying=s0))
    return out


# ---------------------------------------------------------------------------
# filtering


def test_filter_keeps_near_the_money():
    s0, sigma, d = 100.0, 0.8, 91
    expiry = DAY + dt.timedelta(days=d)
    tau = d / 365
    mk = lambda K, typ, vol=1.0: QuoteRow(date=DAY, expiry=expiry, strike=K,
                                          type=typ, iv_mid=sigma, volume=vol,
                                          underlying=s0)
    atm_call, atm_put = mk(100.0, "C"), mk(100.0, "P")
    far_otm_call = mk(s0 * np.exp(3 * sigma * np.sqrt(tau)), "C")
    deep_itm_put = mk(s0 * np.exp(3 * sigma * np.sqrt(tau)), "P")
    no_volume = mk(100.0, "C", vol=0.0)
    kept = filter_quotes([atm_call, atm_put, far_otm_call, deep_itm_put,
                          no_volume], r=0.0)
    assert atm_call in kept and atm_put in kept
    assert far_otm_call not in kept        # delta below 0.25
    assert deep_itm_put not in kept        # |delta| above 0.75
    assert no_volume not in kept


def test_filter_band_is_inclusive():
    # sigma chosen so d1 = 0 exactly: delta = 0.5, well inside the band
    s0, d = 100.0, 365
    expiry = DAY + dt.timedelta(days=d)
    K = s0 * np.exp(0.02)
    sigma = np.sqrt(2 * np.log(K / s0))
    q = QuoteRow(date=DAY, expiry=expiry, strike=K, type="C", iv_mid=sigma,
                 volume=1.0, underlying=s0)
    assert filter_quotes([q], r=0.0) == [q]


# ---------------------------------------------------------------------------
# objective


def test_objective_zero_on_flat_surface():
    quotes = flat_quotes(0.68)
    val = calib_objective("bs", [0.68], quotes, [0.0], fft=FINE_FFT)
    assert val < 1e-8


def test_objective_zero_at_generating_parameters():
    model = make_model(BsParams(sigma=0.84), s0=8367.51)
    quotes = synth_quotes(model)
    # the identical pricing pipeline reproduces the quote vols bit for bit
    assert calib_objective("bs", [0.84], quotes, [0.0]) == 0.0


def test_objective_penalty_is_quadratic_form():
    quotes = flat_quotes(0.68)
    theta = np.array([0.91])
    gamma = np.array([0.37])
    base = calib_objective("bs", theta, quotes, [0.0])
    with_pen = calib_objective("bs", theta, quotes, gamma)
    assert with_pen - base == pytest.approx(0.37 * 0.91**2, abs=1e-14)


def test_objective_infinite_outside_admissible_set():
    quotes = flat_quotes(0.68)
    # vg with 1 - theta*nu - sigma^2*nu/2 <= 0 cannot price
    assert calib_objective("vg", [2.0, 4.0, 1.5], quotes, [0, 0, 0]) == np.inf
    assert calib_objective("sv", [1.0, -0.5, 1.0, 0.0, 0.5], quotes,
                           [0] * 5) == np.inf


def test_objective_rejects_empty_quotes():
    with pytest.raises(DomainError):
        calib_objective("bs", [0.8], [], [0.0])


# ---------------------------------------------------------------------------
# parameter vector plumbing


def test_param_names_and_round_trip():
    assert param_names("bs") == ("sigma",)
    assert param_names("svcj")[-1] == "mu_v"
    assert param_names("svcj", calibrate_rho_j=True)[-1] == "rho_j"
    p = params_from_theta("svcj", [1.0, 0.5, 0.9, 0.2, 0.4, 0.6, -0.1, 0.2, 0.3])
    assert isinstance(p, SvcjParams)
    assert p.rho_j == 0.0
    p2 = params_from_theta("svcj", [1.0, 0.5, 0.9, 0.2, 0.4, 0.6, -0.1, 0.2,
                                    0.3, -0.4], calibrate_rho_j=True)
    assert p2.rho_j == -0.4
    with pytest.raises(DomainError):
        params_from_theta("bs", [0.5, 0.1])
    with pytest.raises(DomainError):
        param_names("garch")


def test_config_validation():
    default_calib_config("sv")
    with pytest.raises(DomainError):
        CalibConfig(family="bs", start=(0.5,), bounds=((1.0, 0.5),),
                    gamma_diag=(0.0,))
    with pytest.raises(DomainError):
        CalibConfig(family="bs", start=(9.0,), bounds=((0.01, 5.0),),
                    gamma_diag=(0.0,))
    with pytest.raises(DomainError):
        CalibConfig(family="bs", start=(0.5,), bounds=((0.01, 5.0),),
                    gamma_diag=(-1.0,))
    with pytest.raises(DomainError):
        CalibConfig(family="bs", start=(0.5, 0.6), bounds=((0.01, 5.0),),
                    gamma_diag=(0.0,))
    with pytest.raises(DomainError):
        default_calib_config("bs", n_starts=0)
    with pytest.raises(DomainError):
        default_calib_config("bs", extra_starts=((0.5, 0.6),))


# ---------------------------------------------------------------------------
# calibrate


def test_calibrate_flat_surface_recovers_sigma():
    quotes = flat_quotes(0.68)
    res = calibrate("bs", quotes, default_calib_config("bs", n_starts=4))
    assert isinstance(res, CalibResult)
    assert res.params.params.sigma == pytest.approx(0.68, abs=1e-6)
    assert res.converged
    assert res.n_quotes == 9  # one ITM row falls outside the delta band


def test_calibrate_beats_every_start():
    quotes = flat_quotes(0.45)
    cfg = default_calib_config("bs", n_starts=6, seed=9)
    res = calibrate("bs", quotes, cfg)
    kept = filter_quotes(quotes, cfg.r)
    for x0 in multistart_points(cfg):
        assert res.objective <= calib_objective("bs", x0, kept,
                                                cfg.gamma_diag) + 1e-12


def test_calibrate_requires_surviving_quotes():
    dead = [QuoteRow(date=DAY, expiry=DAY + dt.timedelta(days=30),
                     strike=8367.51, type="C", iv_mid=0.7, volume=0.0,
                     underlying=8367.51)]
    with pytest.raises(DomainError):
        calibrate("bs", dead)


def test_calibrate_family_config_mismatch():
    with pytest.raises(DomainError):
        calibrate("sv", flat_quotes(0.5), default_calib_config("bs"))


def test_calibrate_deduplicates_quotes():
    quotes = flat_quotes(0.68)
    dup = QuoteRow(date=DAY, expiry=quotes[2].expiry, strike=quotes[2].strike,
                   type="C", iv_mid=0.9, volume=0.5, underlying=8367.51)
    res = calibrate("bs", quotes + [dup],
                    default_calib_config("bs", n_starts=2))
    assert res.n_quotes == 9  # duplicate collapsed to the max-volume row


def test_regularization_shrinks_parameters():
    # statistically across surfaces: a larger penalty weight never grows the
    # fitted parameter magnitude
    gammas = (0.0, 0.05, 0.5)
    fitted = []
    for sigma in (0.25, 0.4, 0.55, 0.7, 0.85, 1.0):
        row = []
        for g in gammas:
            cfg = default_calib_config("bs", n_starts=2, gamma_diag=(g,))
            res = calibrate("bs", flat_quotes(sigma), cfg)
            row.append(abs(res.params.params.sigma))
        fitted.append(row)
    fitted = np.array(fitted)
    assert np.all(np.diff(fitted, axis=1) <= 1e-10)


@pytest.mark.slow
def test_sv_self_calibration():
    model = make_model(SV_TYPICAL, s0=8367.51)
    quotes = synth_quotes(model)
    res = calibrate("sv", quotes, default_calib_config("sv", n_starts=4, seed=2))
    assert res.rmse < 5e-3
    # the moneyness filter trims the high-vol wings but keeps a usable core
    assert 5 <= res.n_quotes <= len(quotes)


@pytest.mark.slow
def test_nested_families_rmse_ordering():
    # pure-RMSE objectives plus warm starts chained through the nested
    # families make the complexity ordering structural rather than a race
    # between optimizers
    model = make_model(SV_TYPICAL, s0=8367.51)
    quotes = synth_quotes(model)

    def cfg_for(family, **kw):
        zeros = tuple(0.0 for _ in param_names(family))
        return default_calib_config(family, gamma_diag=zeros, **kw)

    res_bs = calibrate("bs", quotes, cfg_for("bs", n_starts=2))
    sig = res_bs.params.params.sigma
    sv_warm = (1e-3, sig**2, 1e-3, 0.0, sig**2)
    res_sv = calibrate("sv", quotes,
                       cfg_for("sv", n_starts=2, extra_starts=(sv_warm,)))
    p = res_sv.params.params
    svcj_warm = (p.kappa, p.theta, p.sigma_v, p.rho, p.v0, 0.0, 0.0, 1e-3, 1e-4)
    res_svcj = calibrate("svcj", quotes,
                         cfg_for("svcj", n_starts=1, max_iter=30,
                                 extra_starts=(svcj_warm,)))
    assert res_bs.rmse >= res_sv.rmse >= res_svcj.rmse
    assert res_bs.rmse > 1e-3  # the smile is genuinely curved


@pytest.mark.slow
def test_cgmy_fits_vg_surface_via_small_y():
    # the tempered-stable family reaches the gamma-time limit as y drops to
    # 0, so a vg-generated surface pulls y to the small end while c, g, m
    # land near the converted values
    model = make_model(VgParams(sigma=0.8, nu=0.5, theta=-0.3), s0=8367.51)
    quotes = synth_quotes(model)
    res = calibrate("cgmy", quotes,
                    default_calib_config("cgmy", n_starts=8, seed=4))
    assert res.rmse < 1e-3
    c_true, g_true, m_true = vg_to_cgm(0.8, 0.5, -0.3)
    p = res.params.params
    assert p.y < 0.2
    assert abs(p.c - c_true) / c_true < 0.2
    assert abs(p.g - g_true) / g_true < 0.2
    assert abs(p.m - m_true) / m_true < 0.2
