"""Risk-neutral model parameter records and characteristic functions.

Seven models of the log price are supported: Black-Scholes (``bs``), Merton
jump diffusion (``jd``), Heston stochastic volatility (``sv``), Bates
stochastic volatility with price jumps (``svj``), stochastic volatility with
contemporaneous jumps in price and variance (``svcj``), variance gamma
(``vg``) and CGMY (``cgmy``).

Every characteristic function is that of ln S_tau including the full
risk-neutral drift, so ``chf_eval(model, -1j, tau) == s0 * exp(r * tau)``
holds for each admissible parameter set. The affine models use the
branch-cut-safe formulation of the variance exponents; the svcj jump
transform integral is evaluated by fixed-order Gauss-Legendre quadrature,
which avoids the logarithm branch ambiguity of the fully closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np
from scipy.special import gamma as _gamma_fn

from .errors import DomainError, NumericsError

__all__ = [
    "BsParams",
    "JdParams",
    "SvParams",
    "SvjParams",
    "SvcjParams",
    "VgParams",
    "CgmyParams",
    "ModelParams",
    "chf_eval",
    "svcj_mean_jump",
    "vg_to_cgm",
]

# Gauss-Legendre order for the svcj jump-transform time integral. The
# integrand is smooth in s on [0, tau]; 64 nodes leave the quadrature error
# far below the 1e-8 martingale tolerance for tau <= 2.
_GL_ORDER = 64
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)

# Y values this close to the Gamma(-Y) poles at {0, 1} are routed to the
# variance-gamma form of the CGMY exponent.
_CGMY_POLE_TOL = 1e-6


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise DomainError(msg)


@dataclass(frozen=True)
class BsParams:
    sigma: float

    def __post_init__(self):
        _require(self.sigma > 0, "bs: sigma must be positive")


@dataclass(frozen=True)
class JdParams:
    """Merton jump diffusion: lognormal jumps ~ N(mu_s, delta_s^2) at rate lam."""

    sigma: float
    lam: float
    mu_s: float
    delta_s: float

    def __post_init__(self):
        _require(self.sigma > 0, "jd: sigma must be positive")
        _require(self.lam >= 0, "jd: lam must be nonnegative")
        _require(self.delta_s >= 0, "jd: delta_s must be nonnegative")


@dataclass(frozen=True)
class SvParams:
    """Heston square-root variance: dV = kappa (theta - V) dt + sigma_v sqrt(V) dW.

    Degenerate values (kappa, sigma_v or v0 equal to zero) are admitted so the
    simulator and the characteristic function cover the deterministic-variance
    and driftless limits used as cross-checks.
    """

    kappa: float
    theta: float
    sigma_v: float
    rho: float
    v0: float

    def __post_init__(self):
        _require(self.kappa >= 0, "sv: kappa must be nonnegative")
        _require(self.theta >= 0, "sv: theta must be nonnegative")
        _require(self.sigma_v >= 0, "sv: sigma_v must be nonnegative")
        _require(-1 < self.rho < 1, "sv: rho must lie in (-1, 1)")
        _require(self.v0 >= 0, "sv: v0 must be nonnegative")


@dataclass(frozen=True)
class SvjParams(SvParams):
    """Heston variance plus lognormal price jumps ~ N(mu_s, sigma_s^2) at rate lam."""

    lam: float = 0.0
    mu_s: float = 0.0
    sigma_s: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        _require(self.lam >= 0, "svj: lam must be nonnegative")
        _require(self.sigma_s >= 0, "svj: sigma_s must be nonnegative")


@dataclass(frozen=True)
class SvcjParams(SvjParams):
    """svj plus exponential variance jumps Z_v ~ Exp(mu_v) arriving with the
    price jumps; the conditional price jump is N(mu_s + rho_j Z_v, sigma_s^2)."""

    mu_v: float = 1e-8
    rho_j: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        _require(self.mu_v > 0, "svcj: mu_v must be positive")
        _require(1.0 - self.rho_j * self.mu_v > 0,
                 "svcj: 1 - rho_j * mu_v must be positive")


@dataclass(frozen=True)
class VgParams:
    """Variance gamma in the (sigma, nu, theta) parameterisation."""

    sigma: float
    nu: float
    theta: float

    def __post_init__(self):
        _require(self.sigma > 0, "vg: sigma must be positive")
        _require(self.nu > 0, "vg: nu must be positive")


@dataclass(frozen=True)
class CgmyParams:
    c: float
    g: float
    m: float
    y: float

    def __post_init__(self):
        _require(self.c > 0, "cgmy: c must be positive")
        _require(self.g > 0, "cgmy: g must be positive")
        _require(self.m > 0, "cgmy: m must be positive")
        _require(self.y < 2, "cgmy: y must be below 2")


_FamilyParams = Union[BsParams, JdParams, SvParams, SvjParams, SvcjParams,
                      VgParams, CgmyParams]

_FAMILY_OF = {
    BsParams: "bs",
    JdParams: "jd",
    SvParams: "sv",
    SvjParams: "svj",
    SvcjParams: "svcj",
    VgParams: "vg",
    CgmyParams: "cgmy",
}


@dataclass(frozen=True)
class ModelParams:
    """A tagged model parameter set plus the valuation context (r, s0)."""

    params: _FamilyParams
    r: float
    s0: float

    def __post_init__(self):
        _require(type(self.params) in _FAMILY_OF, "unknown parameter record")
        _require(np.isfinite(self.r), "r must be finite")
        _require(self.s0 > 0, "s0 must be positive")

    @property
    def family(self) -> str:
        return _FAMILY_OF[type(self.params)]

    def with_spot(self, s0: float) -> "ModelParams":
        return replace(self, s0=s0)


def svcj_mean_jump(mu_s: float, sigma_s: float, rho_j: float, mu_v: float) -> float:
    """Mean relative price jump E[e^Xi - 1] with Xi | Z_v ~ N(mu_s + rho_j Z_v, sigma_s^2)
    and Z_v ~ Exp(mu_v). Used as the jump compensator in the risk-neutral drift."""
    _require(1.0 - rho_j * mu_v > 0, "svcj_mean_jump: 1 - rho_j * mu_v must be positive")
    return float(np.exp(mu_s + 0.5 * sigma_s**2) / (1.0 - rho_j * mu_v) - 1.0)


def vg_to_cgm(sigma: float, nu: float, theta: float) -> tuple[float, float, float]:
    """Convert (sigma, nu, theta) variance-gamma parameters to the equivalent
    (C, G, M) representation of the same process."""
    _require(sigma > 0 and nu > 0, "vg_to_cgm: sigma and nu must be positive")
    root = np.sqrt(0.25 * theta**2 * nu**2 + 0.5 * sigma**2 * nu)
    c = 1.0 / nu
    g = 1.0 / (root - 0.5 * theta * nu)
    m = 1.0 / (root + 0.5 * theta * nu)
    return float(c), float(g), float(m)


# ---------------------------------------------------------------------------
# characteristic function building blocks
# ---------------------------------------------------------------------------


def _sv_exponents(u, tau, kappa, sigma_v, rho):
    """Return (B(tau), int_0^tau B(s) ds) for the affine variance exponent.

    B solves the Riccati equation B' = sigma_v^2 B^2 / 2 + (i u rho sigma_v - kappa) B
    - (i u + u^2) / 2 with B(0) = 0; the full variance contribution to the
    log-chf is B(tau) V0 + kappa theta int B.
    """
    u = np.asarray(u, dtype=complex)
    iu = 1j * u
    if sigma_v < 1e-12:
        # deterministic-variance limit: B integrates the discounted quadratic payoff
        q = -0.5 * (iu + u * u)
        if kappa < 1e-14:
            b = q * tau
            int_b = 0.5 * q * tau**2
        else:
            decay = np.exp(-kappa * tau)
            b = q * (1.0 - decay) / kappa
            int_b = q * (tau - (1.0 - decay) / kappa) / kappa
        return b, int_b

    xi = kappa - 1j * rho * sigma_v * u
    d = np.sqrt(xi * xi + sigma_v**2 * (iu + u * u))
    # principal sqrt can land on the branch where xi + d vanishes (it does at
    # u = -i when kappa < rho sigma_v); the exponent is invariant under
    # d -> -d, so flip those points onto the stable branch
    bad = np.abs(xi + d) < 1e-12 * (np.abs(xi) + np.abs(d) + 1.0)
    if np.any(bad):
        d = np.where(bad, -d, d)
    g = (xi - d) / (xi + d)
    decay = np.exp(-d * tau)
    one_minus_ge = 1.0 - g * decay
    b = (xi - d) / sigma_v**2 * (1.0 - decay) / one_minus_ge
    int_b = ((xi - d) * tau - 2.0 * np.log(one_minus_ge / (1.0 - g))) / sigma_v**2
    return b, int_b


def _sv_b_of_s(u, s_nodes, kappa, sigma_v, rho):
    """B(s) on an array of times s_nodes, broadcast against u."""
    u = np.asarray(u, dtype=complex)[..., None]
    iu = 1j * u
    s = np.asarray(s_nodes, dtype=float)
    if sigma_v < 1e-12:
        q = -0.5 * (iu + u * u)
        if kappa < 1e-14:
            return q * s
        return q * (1.0 - np.exp(-kappa * s)) / kappa
    xi = kappa - 1j * rho * sigma_v * u
    d = np.sqrt(xi * xi + sigma_v**2 * (iu + u * u))
    bad = np.abs(xi + d) < 1e-12 * (np.abs(xi) + np.abs(d) + 1.0)
    if np.any(bad):
        d = np.where(bad, -d, d)
    g = (xi - d) / (xi + d)
    decay = np.exp(-d * s)
    return (xi - d) / sigma_v**2 * (1.0 - decay) / (1.0 - g * decay)


def _jump_factor_lognormal(u, tau, lam, mu_s, sigma_s):
    """exp factor of compensated lognormal price jumps (jd / svj)."""
    iu = 1j * u
    mean_jump = np.exp(mu_s + 0.5 * sigma_s**2) - 1.0
    transform = np.exp(iu * mu_s - 0.5 * sigma_s**2 * u * u)
    return np.exp(lam * tau * (transform - 1.0) - iu * lam * mean_jump * tau)


def _phi_bs(u, tau, s0, r, p: BsParams):
    iu = 1j * u
    drift = np.log(s0) + (r - 0.5 * p.sigma**2) * tau
    return np.exp(iu * drift - 0.5 * p.sigma**2 * u * u * tau)


def _phi_jd(u, tau, s0, r, p: JdParams):
    base = _phi_bs(u, tau, s0, r, BsParams(p.sigma))
    return base * _jump_factor_lognormal(u, tau, p.lam, p.mu_s, p.delta_s)


def _phi_sv(u, tau, s0, r, p: SvParams):
    iu = 1j * u
    b, int_b = _sv_exponents(u, tau, p.kappa, p.sigma_v, p.rho)
    return np.exp(iu * (np.log(s0) + r * tau) + p.kappa * p.theta * int_b + b * p.v0)


def _phi_svj(u, tau, s0, r, p: SvjParams):
    base = _phi_sv(u, tau, s0, r, SvParams(p.kappa, p.theta, p.sigma_v, p.rho, p.v0))
    return base * _jump_factor_lognormal(u, tau, p.lam, p.mu_s, p.sigma_s)


def _phi_svcj(u, tau, s0, r, p: SvcjParams):
    u = np.asarray(u, dtype=complex)
    iu = 1j * u
    mean_jump = svcj_mean_jump(p.mu_s, p.sigma_s, p.rho_j, p.mu_v)
    b, int_b = _sv_exponents(u, tau, p.kappa, p.sigma_v, p.rho)
    diffusion = (iu * (np.log(s0) + (r - p.lam * mean_jump) * tau)
                 + p.kappa * p.theta * int_b + b * p.v0)
    # jump transform integral lam * int_0^tau (Lambda(B(s), u) - 1) ds with
    # Lambda(B, u) = E[exp(i u Xi + B Z_v)]; Gauss-Legendre on [0, tau]
    s_nodes = 0.5 * tau * (_GL_NODES + 1.0)
    w_nodes = 0.5 * tau * _GL_WEIGHTS
    b_s = _sv_b_of_s(u, s_nodes, p.kappa, p.sigma_v, p.rho)
    size_transform = np.exp(iu * p.mu_s - 0.5 * p.sigma_s**2 * u * u)[..., None]
    lam_of_s = size_transform / (1.0 - p.mu_v * p.rho_j * iu[..., None] - p.mu_v * b_s)
    integral = np.sum(lam_of_s * w_nodes, axis=-1)
    return np.exp(diffusion + p.lam * (integral - tau))


def _phi_vg(u, tau, s0, r, p: VgParams):
    iu = 1j * u
    base = 1.0 - p.theta * p.nu - 0.5 * p.sigma**2 * p.nu
    _require(base > 0, "vg: 1 - theta nu - sigma^2 nu / 2 must be positive "
                       "for the martingale correction to exist")
    omega = np.log(base) / p.nu
    phi_x = (1.0 - iu * p.theta * p.nu + 0.5 * p.sigma**2 * p.nu * u * u) ** (-tau / p.nu)
    return np.exp(iu * (np.log(s0) + (r + omega) * tau)) * phi_x


def _cgm_log_phi_x(u, tau, c, g, m):
    """Variance-gamma form of the CGMY exponent, used at the Y in {0, 1} poles."""
    gm = g * m
    return c * tau * np.log(gm / (gm + (m - g) * 1j * u + u * u))


def _phi_cgmy(u, tau, s0, r, p: CgmyParams):
    u = np.asarray(u, dtype=complex)
    iu = 1j * u
    _require(p.m > 1, "cgmy: m must exceed 1 for the exponential moment to exist")
    if min(abs(p.y), abs(p.y - 1.0)) < _CGMY_POLE_TOL:
        log_phi = _cgm_log_phi_x(u, tau, p.c, p.g, p.m)
        omega = -_cgm_log_phi_x(-1j, 1.0, p.c, p.g, p.m).real
    else:
        gam = _gamma_fn(-p.y)
        log_phi = p.c * tau * gam * ((p.m - iu) ** p.y - p.m**p.y
                                     + (p.g + iu) ** p.y - p.g**p.y)
        omega = -p.c * gam * ((p.m - 1.0) ** p.y - p.m**p.y
                              + (p.g + 1.0) ** p.y - p.g**p.y)
    return np.exp(iu * (np.log(s0) + (r + omega) * tau) + log_phi)


_PHI = {
    "bs": _phi_bs,
    "jd": _phi_jd,
    "sv": _phi_sv,
    "svj": _phi_svj,
    "svcj": _phi_svcj,
    "vg": _phi_vg,
    "cgmy": _phi_cgmy,
}


def chf_eval(model: ModelParams, u, tau: float):
    """Evaluate phi(u) = E[exp(i u ln S_tau)] under the model's risk-neutral law.

    Parameters
    ----------
    model : ModelParams
        Parameter record with valuation context.
    u : complex scalar or array
        Evaluation points; complex arguments (as used by damped transforms)
        are accepted.
    tau : float
        Horizon in years, must be positive.

    Returns
    -------
    complex scalar or ndarray matching the shape of ``u``.
    """
    if not tau > 0:
        raise DomainError("chf_eval: tau must be positive")
    u_arr = np.asarray(u, dtype=complex)
    with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
        out = _PHI[model.family](u_arr, tau, model.s0, model.r, model.params)
    out = np.asarray(out)
    finite = np.isfinite(out.real) & np.isfinite(out.imag)
    if not np.all(finite):
        bad_u = np.atleast_1d(u_arr)[~np.atleast_1d(finite)]
        raise NumericsError(
            f"chf_eval: non-finite characteristic function value for {model.family} "
            f"at |u| up to {float(np.max(np.abs(bad_u))):.6g}, tau={tau:.6g}")
    if np.isscalar(u) or np.asarray(u).shape == ():
        return complex(out)
    return out
