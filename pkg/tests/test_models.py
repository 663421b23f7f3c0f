"""Characteristic-function tests.

The affine models (sv, svj, svcj) are cross-checked against an independent
oracle that integrates the Riccati system with ``solve_ivp``; the remaining
closed forms are checked against their defining identities and against each
other (vg vs cgmy duality, nesting limits).
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import (
    ALL_FAMILY_PARAMS, CGMY_SETS, JD_TYPICAL, SV_TYPICAL, SVCJ_SETS,
    SVJ_TYPICAL, VG_TYPICAL, make_model,
)
from volhedge.errors import DomainError, NumericsError
from volhedge.models import (
    BsParams, CgmyParams, ModelParams, SvParams, SvcjParams, SvjParams,
    VgParams, chf_eval, svcj_mean_jump, vg_to_cgm,
)


def affine_chf_ode(params, s0, r, u, tau):
    """Oracle: integrate the affine exponent ODEs for sv / svj / svcj."""
    if isinstance(params, SvcjParams):
        lam, mu_s, sigma_s = params.lam, params.mu_s, params.sigma_s
        mu_v, rho_j = params.mu_v, params.rho_j
    elif isinstance(params, SvjParams):
        lam, mu_s, sigma_s = params.lam, params.mu_s, params.sigma_s
        mu_v, rho_j = 0.0, 0.0
    else:
        lam = mu_s = sigma_s = mu_v = rho_j = 0.0
    kappa, theta, sigma_v, rho = params.kappa, params.theta, params.sigma_v, params.rho
    mean_jump = np.exp(mu_s + 0.5 * sigma_s**2) / (1.0 - rho_j * mu_v) - 1.0
    iu = 1j * u

    def rhs(_t, y):
        b = y[0]
        db = 0.5 * sigma_v**2 * b * b + (iu * rho * sigma_v - kappa) * b - 0.5 * (iu + u * u)
        jump = 0.0
        if lam > 0:
            transform = np.exp(iu * mu_s - 0.5 * sigma_s**2 * u * u)
            transform = transform / (1.0 - mu_v * rho_j * iu - mu_v * b)
            jump = lam * (transform - 1.0)
        da = iu * (r - lam * mean_jump) + kappa * theta * b + jump
        return [db, da]

    sol = solve_ivp(rhs, (0.0, tau), [0j, 0j], method="DOP853",
                    rtol=1e-12, atol=1e-14)
    b_tau, a_tau = sol.y[0, -1], sol.y[1, -1]
    return np.exp(1j * u * np.log(s0) + a_tau + b_tau * params.v0)


@pytest.mark.parametrize("family", sorted(ALL_FAMILY_PARAMS))
def test_chf_at_zero_is_one(family):
    model = make_model(ALL_FAMILY_PARAMS[family], r=0.03, s0=250.0)
    assert chf_eval(model, 0.0, 0.5) == pytest.approx(1.0 + 0j, abs=1e-12)


@pytest.mark.parametrize("family", sorted(ALL_FAMILY_PARAMS))
def test_martingale_identity(family):
    model = make_model(ALL_FAMILY_PARAMS[family], r=0.02, s0=9804.85)
    for tau in (30 / 365, 90 / 365, 1.0):
        value = chf_eval(model, -1j, tau)
        target = model.s0 * np.exp(model.r * tau)
        assert abs(value - target) / target < 1e-8


def test_bs_chf_closed_form_value():
    model = make_model(BsParams(sigma=0.84), r=0.0, s0=1.0)
    got = chf_eval(model, 1.0, 1.0)
    half_var = 0.5 * 0.84**2
    expected = np.exp(-1j * half_var - half_var)
    assert got == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("family", sorted(ALL_FAMILY_PARAMS))
def test_chf_modulus_bound_and_conjugate_symmetry(family, rng):
    model = make_model(ALL_FAMILY_PARAMS[family], r=0.0, s0=1.0)
    u = rng.uniform(-60.0, 60.0, size=200)
    phi_pos = chf_eval(model, u, 0.7)
    phi_neg = chf_eval(model, -u, 0.7)
    assert np.all(np.abs(phi_pos) <= 1.0 + 1e-12)
    np.testing.assert_allclose(phi_neg, np.conj(phi_pos), atol=1e-12)


@pytest.mark.parametrize("params", [SV_TYPICAL,
                                    SvParams(0.5, 0.2, 0.9, -0.7, 0.4),
                                    # kappa < rho * sigma_v stresses the branch flip at u = -i
                                    SvParams(0.3, 0.5, 0.9, 0.8, 0.4)])
def test_sv_chf_matches_ode_oracle(params):
    model = make_model(params, r=0.01, s0=120.0)
    for u in (0.5, -2.0, 7.5, 1.0 - 2.5j, 40.0 - 2.5j):
        got = chf_eval(model, u, 0.75)
        want = affine_chf_ode(params, model.s0, model.r, u, 0.75)
        assert abs(got - want) < 1e-9 * max(1.0, abs(want))


def test_sv_martingale_on_branch_flip_set():
    params = SvParams(kappa=0.3, theta=0.5, sigma_v=0.9, rho=0.8, v0=0.4)
    model = make_model(params, r=0.05, s0=50.0)
    value = chf_eval(model, -1j, 1.0)
    assert abs(value - 50.0 * np.exp(0.05)) / 50.0 < 1e-10


def test_svj_chf_matches_ode_oracle():
    model = make_model(SVJ_TYPICAL, r=0.02, s0=80.0)
    for u in (1.5, -4.0, 2.0 - 2.5j):
        got = chf_eval(model, u, 0.4)
        want = affine_chf_ode(SVJ_TYPICAL, model.s0, model.r, u, 0.4)
        assert abs(got - want) < 1e-9 * max(1.0, abs(want))


@pytest.mark.parametrize("params", SVCJ_SETS)
def test_svcj_chf_matches_ode_oracle(params):
    model = make_model(params, r=0.0, s0=8367.51)
    for u in (0.5, 3.0, -6.0, 1.0 - 2.5j, 25.0 - 2.5j):
        got = chf_eval(model, u, 0.5)
        want = affine_chf_ode(params, model.s0, model.r, u, 0.5)
        assert abs(got - want) < 1e-8 * max(1.0, abs(want))


def test_svcj_rho_j_sensitivity_against_oracle():
    base = SVCJ_SETS[2]
    for rho_j in (-0.5, 0.5):
        params = SvcjParams(kappa=base.kappa, theta=base.theta, sigma_v=base.sigma_v,
                            rho=base.rho, v0=base.v0, lam=base.lam, mu_s=base.mu_s,
                            sigma_s=base.sigma_s, mu_v=base.mu_v, rho_j=rho_j)
        model = make_model(params, r=0.01, s0=100.0)
        got = chf_eval(model, 2.0 - 2.5j, 0.25)
        want = affine_chf_ode(params, 100.0, 0.01, 2.0 - 2.5j, 0.25)
        assert abs(got - want) < 1e-8 * max(1.0, abs(want))
        mart = chf_eval(model, -1j, 0.25)
        assert abs(mart - 100.0 * np.exp(0.01 * 0.25)) / 100.0 < 1e-8


def test_svj_with_zero_intensity_equals_sv():
    sv = SvParams(kappa=1.2, theta=0.4, sigma_v=0.7, rho=-0.5, v0=0.3)
    svj = SvjParams(kappa=1.2, theta=0.4, sigma_v=0.7, rho=-0.5, v0=0.3,
                    lam=0.0, mu_s=-0.2, sigma_s=0.3)
    u = np.linspace(-30, 30, 41)
    phi_sv = chf_eval(make_model(sv), u, 0.6)
    phi_svj = chf_eval(make_model(svj), u, 0.6)
    np.testing.assert_allclose(phi_svj, phi_sv, atol=1e-14)


def test_svcj_with_vanishing_variance_jump_approaches_svj():
    svj = SVJ_TYPICAL
    svcj = SvcjParams(kappa=svj.kappa, theta=svj.theta, sigma_v=svj.sigma_v,
                      rho=svj.rho, v0=svj.v0, lam=svj.lam, mu_s=svj.mu_s,
                      sigma_s=svj.sigma_s, mu_v=1e-8, rho_j=0.0)
    u = np.linspace(-20, 20, 21)
    phi_svj = chf_eval(make_model(svj), u, 0.5)
    phi_svcj = chf_eval(make_model(svcj), u, 0.5)
    np.testing.assert_allclose(phi_svcj, phi_svj, atol=1e-6)


def test_vg_cgm_duality():
    c, g, m = vg_to_cgm(VG_TYPICAL.sigma, VG_TYPICAL.nu, VG_TYPICAL.theta)
    vg_model = make_model(VG_TYPICAL, r=0.02, s0=100.0)
    cgm_model = make_model(CgmyParams(c=c, g=g, m=m, y=1.0), r=0.02, s0=100.0)
    for u in (0.5, -0.5, 1.0, -1.0, 5.0, -5.0):
        diff = abs(chf_eval(cgm_model, u, 1.0) - chf_eval(vg_model, u, 1.0))
        assert diff < 1e-10


def test_cgmy_pole_routing_continuous_at_zero():
    # y -> 0 is a genuine limit of the general exponent onto the vg form
    p_small = CgmyParams(c=2.0, g=6.0, m=8.0, y=1e-4)
    p_routed = CgmyParams(c=2.0, g=6.0, m=8.0, y=0.0)
    u = np.array([0.5, 2.0, -3.0])
    a = chf_eval(make_model(p_small), u, 1.0)
    b = chf_eval(make_model(p_routed), u, 1.0)
    np.testing.assert_allclose(a, b, atol=5e-3)


def test_vg_to_cgm_symmetric_case():
    c, g, m = vg_to_cgm(1.0, 1.0, 0.0)
    assert c == pytest.approx(1.0, abs=1e-15)
    assert g == pytest.approx(np.sqrt(2.0), rel=1e-14)
    assert m == pytest.approx(np.sqrt(2.0), rel=1e-14)


def test_vg_to_cgm_orders_g_above_m_for_negative_skew():
    # theta < 0 tilts mass to the downside, so the right tail decays faster: M > G
    c, g, m = vg_to_cgm(0.8, 0.5, -0.3)
    assert m > g > 0
    assert c == pytest.approx(2.0, rel=1e-14)


def test_svcj_mean_jump_values():
    assert svcj_mean_jump(0.0, 0.0, 0.0, 0.3) == pytest.approx(0.0, abs=1e-15)
    assert svcj_mean_jump(-0.04, 0.0, 0.0, 0.45) == pytest.approx(np.expm1(-0.04), rel=1e-14)
    assert svcj_mean_jump(0.0, 0.2, 0.0, 0.45) == pytest.approx(np.expm1(0.02), rel=1e-14)
    assert svcj_mean_jump(-0.35, 0.1, 0.5, 0.54) == pytest.approx(
        np.exp(-0.35 + 0.005) / (1.0 - 0.27) - 1.0, rel=1e-14)


def test_svcj_mean_jump_domain_error():
    with pytest.raises(DomainError):
        svcj_mean_jump(0.0, 0.0, 2.5, 0.5)  # 1 - rho_j mu_v <= 0


def test_chf_rejects_nonpositive_tau():
    model = make_model(BsParams(sigma=0.5))
    with pytest.raises(DomainError):
        chf_eval(model, 1.0, 0.0)
    with pytest.raises(DomainError):
        chf_eval(model, 1.0, -0.1)


def test_chf_overflow_is_surfaced():
    model = make_model(BsParams(sigma=0.2))
    with pytest.raises(NumericsError):
        chf_eval(model, -1e5j, 1.0)


def test_vg_martingale_correction_domain():
    with pytest.raises(DomainError):
        chf_eval(make_model(VgParams(sigma=1.0, nu=3.0, theta=0.5)), 1.0, 1.0)


def test_cgmy_requires_m_above_one_for_pricing():
    with pytest.raises(DomainError):
        chf_eval(make_model(CgmyParams(c=1.0, g=5.0, m=0.8, y=0.5)), 1.0, 1.0)


def test_parameter_validation():
    with pytest.raises(DomainError):
        BsParams(sigma=0.0)
    with pytest.raises(DomainError):
        SvParams(kappa=1.0, theta=0.2, sigma_v=0.5, rho=1.0, v0=0.1)
    with pytest.raises(DomainError):
        SvcjParams(kappa=1.0, theta=0.2, sigma_v=0.5, rho=0.0, v0=0.1,
                   lam=0.5, mu_s=0.0, sigma_s=0.1, mu_v=0.0)
    with pytest.raises(DomainError):
        CgmyParams(c=1.0, g=5.0, m=5.0, y=2.0)
    with pytest.raises(DomainError):
        ModelParams(params=BsParams(0.2), r=0.0, s0=0.0)


def test_sv_zero_volofvol_limit_is_integrated_variance_bs():
    # sigma_v = 0 collapses to a deterministic variance path; the chf must agree
    # with a BS chf at the average integrated variance
    kappa, theta, v0, tau = 1.3, 0.5, 0.2, 0.8
    params = SvParams(kappa=kappa, theta=theta, sigma_v=0.0, rho=0.0, v0=v0)
    model = make_model(params, r=0.03, s0=10.0)
    w = theta * tau + (v0 - theta) * (1 - np.exp(-kappa * tau)) / kappa
    u = np.array([0.7, -3.0, 11.0])
    expected = np.exp(1j * u * (np.log(10.0) + 0.03 * tau) - 0.5 * (1j * u + u * u) * w)
    np.testing.assert_allclose(chf_eval(model, u, tau), expected, atol=1e-12)
