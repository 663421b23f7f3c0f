"""Self-financing dynamic hedges along simulated paths.

Four strategies rebalance a short European option book: Delta, Delta-Gamma
and Delta-Vega (the latter two neutralize the book with a second option),
and a local minimum-variance ratio that loads the underlying against both
diffusive and jump risk.

The path engine prices through the homogeneity reduction
C(S, K) = S c(ln(K/S)): one strike-grid transform per time step and
variance node yields a spline in log-moneyness that every path evaluates at
its own state, with a second spline across variance nodes supplying the
variance sensitivity. Black-Scholes hedge models bypass the tables through
closed forms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_hermite, roots_legendre
from scipy.stats import gamma as gamma_dist
from scipy.stats import norm

from .errors import DegenerateInstrumentError, DomainError, NumericsError
from .models import ModelParams, VgParams, chf_eval, vg_to_cgm
from .pricing import (
    DEFAULT_FFT, FftConfig, OptionSpec, bs_greeks, bs_price, carr_madan_grid,
    carr_madan_price, fd_greeks,
)
from .scenarios import PathMatrix

__all__ = [
    "STRATEGIES",
    "HedgeSpec",
    "PricingContext",
    "PortfolioState",
    "HedgeLedger",
    "default_second_instrument",
    "instrument_price",
    "strategy_ratios",
    "hedge_ratios",
    "mv_ratio",
    "portfolio_step",
    "portfolio_value",
    "run_hedge_experiment",
    "write_pnl_csv",
]

STRATEGIES = ("delta", "delta_gamma", "delta_vega", "min_variance")
_MULTI_INSTRUMENT = ("delta_gamma", "delta_vega")
_SV_FAMILIES = ("sv", "svj", "svcj")
_DEGENERATE_TOL = 1e-12
_MV_SEED = 977123


@dataclass(frozen=True)
class HedgeSpec:
    """One hedging assignment: strategy, hedge model and the instruments.

    ``hedge_model.s0`` is a reference spot only; pricing along a path always
    replaces it with the current simulated spot. The second instrument is
    required exactly for the two-instrument strategies and must sit at a
    different strike than the target.
    """

    strategy: str
    hedge_model: ModelParams
    target: OptionSpec
    second: Optional[OptionSpec] = None
    rebalance_every: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DomainError(f"HedgeSpec: unknown strategy {self.strategy!r};"
                              f" expected one of {STRATEGIES}")
        if self.strategy in _MULTI_INSTRUMENT:
            if self.second is None:
                raise DomainError(f"HedgeSpec: {self.strategy} needs a second "
                                  "instrument")
            if self.second.strike == self.target.strike:
                raise DomainError("HedgeSpec: second instrument must sit at a "
                                  "different strike than the target")
        elif self.second is not None:
            raise DomainError(f"HedgeSpec: {self.strategy} is single-"
                              "instrument; drop the second option")
        if self.rebalance_every < 1:
            raise DomainError("HedgeSpec: rebalance_every must be >= 1")

    @property
    def family(self) -> str:
        return self.hedge_model.family


def default_second_instrument(s0: float, target: OptionSpec) -> OptionSpec:
    """Companion call for Gamma/Vega neutralization: struck 5% above the
    inception spot (distinct from an at-the-money target by construction)
    and expiring one month after the target, so it never decays to zero
    sensitivity inside the experiment."""
    if not s0 > 0:
        raise DomainError("default_second_instrument: s0 must be positive")
    return OptionSpec(strike=1.05 * s0, tau=target.tau + 30.0 / 365.0,
                      is_call=True)


@dataclass(frozen=True)
class PricingContext:
    """Valuation settings for a path experiment.

    ``premium``/``second_premium`` are the inception marks of the target and
    companion option (typically interpolated off the market surface); left
    as None they fall back to the hedge model's own value. ``mv_draws``
    sizes the one-step samples behind the engine's minimum-variance fields;
    the scalar `mv_ratio` keeps its contractual 10k draws.
    """

    premium: Optional[float] = None
    second_premium: Optional[float] = None
    fft: FftConfig = DEFAULT_FFT
    n_v_nodes: int = 13
    mv_draws: int = 2000
    mv_seed: int = _MV_SEED

    def __post_init__(self):
        if self.premium is not None and not self.premium > 0:
            raise DomainError("PricingContext: premium must be positive")
        if self.second_premium is not None and not self.second_premium > 0:
            raise DomainError("PricingContext: second_premium must be positive")
        if self.n_v_nodes < 5:
            raise DomainError("PricingContext: need at least 5 variance nodes")
        if self.mv_draws < 100:
            raise DomainError("PricingContext: mv_draws must be >= 100")


def instrument_price(model: ModelParams, option: OptionSpec,
                     fft: FftConfig = DEFAULT_FFT) -> float:
    """Hedge-model value of one option; closed form for bs, transform
    otherwise."""
    if model.family == "bs":
        return bs_price(model.s0, option, model.r, model.params.sigma)
    return carr_madan_price(model, option, fft)


# ---------------------------------------------------------------------------
# ratio construction from Greeks


def strategy_ratios(strategy: str, target_greeks, second_greeks=None):
    """Holdings (xi1, lambda2) from instrument Greeks alone.

    Greeks are (delta, gamma, vega) triples. The two-instrument strategies
    zero the book's Gamma respectively Vega by construction:
    lambda = g_target / g_second, xi1 = delta_target - lambda delta_second.
    """
    d_t, g_t, v_t = target_greeks
    if strategy == "delta":
        return float(d_t), 0.0
    if strategy not in _MULTI_INSTRUMENT:
        raise DomainError(f"strategy_ratios: {strategy!r} is not a "
                          "Greek-ratio strategy")
    if second_greeks is None:
        raise DomainError("strategy_ratios: second instrument Greeks required")
    d_2, g_2, v_2 = second_greeks
    num, den = (g_t, g_2) if strategy == "delta_gamma" else (v_t, v_2)
    if abs(den) < _DEGENERATE_TOL:
        kind = "Gamma" if strategy == "delta_gamma" else "Vega"
        raise DegenerateInstrumentError(
            f"{strategy}: second instrument {kind} {den:.3e} below "
            f"{_DEGENERATE_TOL}; it cannot neutralize the book")
    lam = num / den
    return float(d_t - lam * d_2), float(lam)


def _state_model(base: ModelParams, s_t: float, state) -> ModelParams:
    """Move the hedge model to the current spot and volatility state."""
    if not s_t > 0:
        raise DomainError("hedge state: spot must be positive")
    p = base.params
    if state is not None:
        fam = base.family
        if fam in _SV_FAMILIES:
            if state < 0:
                raise DomainError("hedge state: variance must be nonnegative")
            p = replace(p, v0=float(state))
        elif fam in ("bs", "jd", "vg"):
            if not state > 0:
                raise DomainError("hedge state: volatility must be positive")
            p = replace(p, sigma=float(state))
        else:
            raise DomainError(f"hedge state: {fam} carries no volatility state")
    return ModelParams(params=p, r=base.r, s0=float(s_t))


def _shifted(option: OptionSpec, t: float) -> OptionSpec:
    tau = option.tau - t
    if tau <= 0:
        raise DomainError(f"option expired: tau - t = {tau:.6g}")
    return replace(option, tau=tau)


def _point_greeks(model: ModelParams, option: OptionSpec, fft: FftConfig):
    """(delta, gamma, vega) of one option at the model's own state. cgmy has
    no volatility state, so its vega is reported as 0 (a Vega hedge under it
    is degenerate by construction)."""
    if model.family == "bs":
        return bs_greeks(model.s0, option, model.r, model.params.sigma)
    if model.family == "cgmy":
        k = float(np.log(option.strike / model.s0))
        table = _CTable("cgmy", model.params, model.r, option.tau,
                        k - 0.1, k + 0.1, None, fft)
        _, delta, gamma, _ = table.greeks(
            np.array([model.s0]), option.strike, option.tau, model.r,
            option.is_call)
        return float(delta[0]), float(gamma[0]), 0.0
    return fd_greeks(model, option, fft)


def hedge_ratios(spec: HedgeSpec, s_t: float, state=None, t: float = 0.0,
                 fft: FftConfig = DEFAULT_FFT):
    """Single-state holdings (xi1, lambda2) for the spec's strategy.

    ``state`` is the current variance for stochastic-vol hedge models (or a
    spot volatility override for bs/jd/vg); None keeps the calibrated
    parameters. ``t`` is time elapsed since inception, shortening both
    instruments.
    """
    if spec.strategy == "min_variance":
        return mv_ratio(spec.hedge_model, s_t, state, spec, t=t, fft=fft), 0.0
    model = _state_model(spec.hedge_model, s_t, state)
    target = _shifted(spec.target, t)
    g_t = _point_greeks(model, target, fft)
    if spec.strategy == "delta":
        return strategy_ratios("delta", g_t)
    g_2 = _point_greeks(model, _shifted(spec.second, t), fft)
    return strategy_ratios(spec.strategy, g_t, g_2)


# ---------------------------------------------------------------------------
# normalized price tables: c(k, V) = C(S, K, V)/S at k = ln(K/S)


def _diag_eval(nodes: np.ndarray, table: np.ndarray, v: np.ndarray):
    """Evaluate a cubic interpolant through table rows at per-column points.

    table is (n_nodes, n_pts); v (n_pts,) selects one interpolation point per
    column. Returns interpolated values and their d/dv."""
    cs = CubicSpline(nodes, table, axis=0)
    idx = np.clip(np.searchsorted(nodes, v) - 1, 0, len(nodes) - 2)
    t = v - nodes[idx]
    cols = np.arange(table.shape[1])
    a, b, c, d = (cs.c[j, idx, cols] for j in range(4))
    val = ((a * t + b) * t + c) * t + d
    dv = (3.0 * a * t + 2.0 * b) * t + c
    return val, dv


class _CTable:
    """Normalized call values c(k) (unit spot) of one expiry, splined in
    log-moneyness, optionally layered over a grid of variance states.

    Variance queries are clipped to the node range; builders size the range
    to cover every state they will ask for.
    """

    def __init__(self, family, params, r, tau, k_lo, k_hi, v_nodes, fft):
        self.v_nodes = v_nodes
        pad_lo, pad_hi = k_lo - 0.4, k_hi + 0.4
        nodes = [None] if v_nodes is None else v_nodes
        self.splines = []
        for node in nodes:
            p = params if node is None else replace(params, v0=float(node))
            model = ModelParams(params=p, r=r, s0=1.0)
            k, calls = carr_madan_grid(model, tau, fft)
            mask = (k >= pad_lo) & (k <= pad_hi)
            if mask.sum() < 8:
                raise DomainError("price table: moneyness span outside the "
                                  "transform grid; widen the FFT grid")
            self.splines.append(CubicSpline(k[mask], calls[mask]))

    def eval(self, k, v=None):
        """(c, c_k, c_kk, c_v) at per-point log-moneyness and variance."""
        k = np.asarray(k, dtype=float)
        if self.v_nodes is None:
            spl = self.splines[0]
            return spl(k), spl(k, 1), spl(k, 2), np.zeros_like(k)
        v = np.clip(np.asarray(v, dtype=float), self.v_nodes[0],
                    self.v_nodes[-1])
        val = np.stack([spl(k) for spl in self.splines])
        d1 = np.stack([spl(k, 1) for spl in self.splines])
        d2 = np.stack([spl(k, 2) for spl in self.splines])
        c, c_v = _diag_eval(self.v_nodes, val, v)
        c_k, _ = _diag_eval(self.v_nodes, d1, v)
        c_kk, _ = _diag_eval(self.v_nodes, d2, v)
        return c, c_k, c_kk, c_v

    def greeks(self, s, strike, tau, r, is_call, v=None):
        """(price, delta, gamma, vega) per point from the homogeneity
        reduction; puts via parity (same gamma and vega)."""
        s = np.asarray(s, dtype=float)
        k = np.log(strike / s)
        c, c_k, c_kk, c_v = self.eval(k, v)
        price = s * np.maximum(c, 0.0)
        delta = c - c_k
        gamma = (c_kk - c_k) / s
        vega = s * c_v
        if not is_call:
            price = price - s + strike * np.exp(-r * tau)
            delta = delta - 1.0
        return price, delta, gamma, vega


def _bs_greeks_vec(s, strike, tau, r, sigma, is_call):
    """(price, delta, gamma, vega_sigma) vectorized over spot."""
    s = np.asarray(s, dtype=float)
    sqrt_tau = np.sqrt(tau)
    d1 = (np.log(s / strike) + (r + 0.5 * sigma**2) * tau) / (sigma * sqrt_tau)
    d2 = d1 - sigma * sqrt_tau
    disc_k = strike * np.exp(-r * tau)
    price = s * norm.cdf(d1) - disc_k * norm.cdf(d2)
    delta = norm.cdf(d1)
    gamma = norm.pdf(d1) / (s * sigma * sqrt_tau)
    vega = s * norm.pdf(d1) * sqrt_tau
    if not is_call:
        price = price - s + disc_k
        delta = delta - 1.0
    return price, delta, gamma, vega


# ---------------------------------------------------------------------------
# minimum-variance machinery


def _antithetic_uniform(rng, n):
    half = (n + 1) // 2
    u = rng.random(half)
    u = np.clip(u, 1e-12, 1.0 - 1e-12)
    return np.concatenate([u, 1.0 - u])[:n]


def _antithetic_normal(rng, n):
    half = (n + 1) // 2
    z = rng.standard_normal(half)
    return np.concatenate([z, -z])[:n]


def _jump_draws(family, params, n, rng):
    """(z_price, z_var) antithetic draws from the model's jump law."""
    if family == "jd":
        return params.mu_s + params.delta_s * _antithetic_normal(rng, n), \
            np.zeros(n)
    if family == "svj":
        return params.mu_s + params.sigma_s * _antithetic_normal(rng, n), \
            np.zeros(n)
    if family == "svcj":
        zv = -params.mu_v * np.log(_antithetic_uniform(rng, n))
        z = params.mu_s + params.rho_j * zv \
            + params.sigma_s * _antithetic_normal(rng, n)
        return z, zv
    raise DomainError(f"_jump_draws: {family} has no jump component")


def _vg_one_step(params: VgParams, r, dt, n, rng):
    """Exact one-step variance-gamma log returns via the gamma subordinator,
    drift chosen so E[e^X] = e^{r dt} (the transform's own martingale law)."""
    base = 1.0 - params.theta * params.nu - 0.5 * params.sigma**2 * params.nu
    if base <= 0:
        raise DomainError("vg one-step law undefined: "
                          "1 - theta nu - sigma^2 nu / 2 must be positive")
    omega = np.log(base) / params.nu
    g = gamma_dist.ppf(_antithetic_uniform(rng, n), a=dt / params.nu,
                       scale=params.nu)
    g = np.clip(g, 1e-300, None)
    z = _antithetic_normal(rng, n)
    x = (r + omega) * dt + params.theta * g + params.sigma * np.sqrt(g) * z
    # winsorize the ~1e-9 quantile so every draw stays on the transform grid
    return np.clip(x, -10.0, 10.0)


def _chf_one_step(params, r, dt, n, rng):
    """One-step log returns sampled by inverting the characteristic function
    of ln S_dt (unit spot) onto a distribution grid.

    Raises NumericsError when the transform decays too slowly to invert (a
    tempered-stable activity exponent near zero at daily steps)."""
    span = max(1.0, 10.0 / min(params.g, max(params.m - 1.0, 0.2)))
    eta = np.pi / span
    unit = ModelParams(params=params, r=r, s0=1.0)
    n_grid = 1 << 10
    while True:
        u = eta * np.arange(n_grid)
        phi = chf_eval(unit, u, dt)
        if abs(phi[-1]) < 1e-12:
            break
        n_grid <<= 1
        if n_grid > (1 << 21):
            raise NumericsError(
                "one-step transform tail decays too slowly to invert at this "
                "step size; the jump-activity exponent is too close to zero")
    weights = (3.0 + (-1.0) ** (np.arange(n_grid) + 1)) * (eta / 3.0)
    weights[0] = eta / 3.0
    x0 = -np.pi / eta
    spectrum = phi * np.exp(-1j * u * x0) * weights
    density = np.maximum(np.fft.fft(spectrum).real / np.pi, 0.0)
    x = x0 + (2.0 * np.pi / (n_grid * eta)) * np.arange(n_grid)
    cdf = np.cumsum(density)
    cdf /= cdf[-1]
    uu = _antithetic_uniform(rng, n)
    return np.interp(uu, cdf, x)


def _levy_density(params, z):
    """Tempered-stable jump intensity; variance gamma is its
    zero-activity-exponent member."""
    if isinstance(params, VgParams):
        _, g_, m_ = vg_to_cgm(params.sigma, params.nu, params.theta)
        c_, y_ = 1.0 / params.nu, 0.0
    else:
        c_, g_, m_, y_ = params.c, params.g, params.m, params.y
    z = np.asarray(z, dtype=float)
    decay = np.where(z > 0, m_, g_)
    return c_ * np.exp(-decay * np.abs(z)) / np.abs(z) ** (1.0 + y_)


def _levy_tail_spans(params):
    if isinstance(params, VgParams):
        _, g_, m_ = vg_to_cgm(params.sigma, params.nu, params.theta)
    else:
        g_, m_ = params.g, params.m
    return min(60.0 / g_, 4.0), min(60.0 / m_, 4.0)


def _levy_mv_ratio(params, c_spline, k):
    """Small-step limit of Cov(dC, dS)/Var(dS) for a pure-jump model: jump
    integrals of the normalized price against the jump intensity, on a
    log-spaced Gauss-Legendre grid that absorbs the small-jump singularity."""
    xs, ws = roots_legendre(240)
    span_neg, span_pos = _levy_tail_spans(params)

    def side(sign, z_max):
        lo, hi = np.log(1e-9), np.log(z_max)
        s = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
        z = sign * np.exp(s)
        w = ws * 0.5 * (hi - lo) * np.abs(z)   # dz = |z| ds
        nu = _levy_density(params, z)
        move = np.expm1(z)
        dc = np.exp(z) * c_spline(k - z) - c_spline(k)
        return np.sum(w * nu * move * dc), np.sum(w * nu * move**2)

    n_pos, d_pos = side(1.0, span_pos)
    n_neg, d_neg = side(-1.0, span_neg)
    den = d_pos + d_neg
    if den < 1e-14:
        raise DegenerateInstrumentError("pure-jump variance vanishes")
    return float((n_pos + n_neg) / den)


def mv_ratio(hedge_model: ModelParams, s_t: float, state, spec: HedgeSpec,
             t: float = 0.0, dt: float = 1.0 / 365.0, n_draws: int = 10_000,
             seed: int = _MV_SEED, fft: FftConfig = DEFAULT_FFT) -> float:
    """Local risk-minimizing underlying position for a short target option.

    xi = [V S^2 C_S + rho sigma_v V S C_V + lam E(dS dC)]
         / [V S^2 + lam E(dS^2)]
    with the jump expectations taken over the model's jump law by antithetic
    Monte Carlo on a fixed sub-seed. Pure-jump models (vg/cgmy) instead use
    the one-step ratio Cov(dC, dS)/Var(dS) under the model's own step-dt
    law; when that law's transform cannot be inverted numerically, the
    small-step limit is computed by quadrature against the jump intensity.
    """
    model = _state_model(hedge_model, s_t, state)
    fam = model.family
    target = _shifted(spec.target, t)
    k = float(np.log(target.strike / s_t))
    rng = np.random.default_rng(seed)
    p = model.params
    put_shift = 0.0 if target.is_call else 1.0

    if fam == "bs":
        return bs_greeks(s_t, target, model.r, p.sigma)[0]

    if fam in ("vg", "cgmy"):
        if fam == "vg":
            x = _vg_one_step(p, model.r, dt, n_draws, rng)
        else:
            try:
                x = _chf_one_step(p, model.r, dt, n_draws, rng)
            except NumericsError:
                span = max(_levy_tail_spans(p)) + 0.2
                table = _CTable(fam, p, model.r, target.tau, k - span,
                                k + span, None, fft)
                return _levy_mv_ratio(p, table.splines[0], k) - put_shift
        span = max(1.5, float(np.abs(x).max()) + 0.2)
        table = _CTable(fam, p, model.r, target.tau, k - span, k + span,
                        None, fft)
        spl = table.splines[0]
        ds = np.expm1(x)
        dc = np.exp(x) * spl(k - x) - spl(k)
        var = ds.var()
        if var < 1e-16:
            raise DegenerateInstrumentError("one-step spot variance vanishes")
        cov = np.mean(ds * dc) - ds.mean() * dc.mean()
        return float(cov / var) - put_shift

    if fam == "jd":
        v_t, rho_term, lam = p.sigma**2, 0.0, p.lam
        delta = fd_greeks(model, target, fft)[0]
    else:
        v_t, lam = p.v0, getattr(p, "lam", 0.0)
        if v_t < 1e-14 and lam <= 0:
            raise DegenerateInstrumentError(
                "minimum-variance denominator vanishes (no diffusive "
                "variance and no jumps at this state)")
        if v_t >= 1e-3:
            delta, _, c_big_v = fd_greeks(model, target, fft)
        else:
            # variance too close to zero for a central bump: delta off the
            # price table, variance sensitivity one-sided
            table0 = _CTable(fam, p, model.r, target.tau, k - 0.2, k + 0.2,
                             None, fft)
            delta = float(table0.greeks(np.array([s_t]), target.strike,
                                        target.tau, model.r,
                                        target.is_call)[1][0])
            h = 1e-3
            up = ModelParams(params=replace(p, v0=v_t + h), r=model.r,
                             s0=s_t)
            c_big_v = (carr_madan_price(up, target, fft)
                       - carr_madan_price(model, target, fft)) / h
        rho_term = p.rho * p.sigma_v * v_t * (c_big_v / s_t)
    if not target.is_call:
        delta += 1.0   # work with the call delta; shift back at the end

    num = v_t * delta + rho_term
    den = v_t
    if lam > 0:
        z, zv = _jump_draws(fam, p, n_draws, rng)
        v_nodes = None
        if fam in _SV_FAMILIES:
            hi = v_t + float(zv.max()) + 1e-3
            v_nodes = np.linspace(max(v_t - 1e-3, 0.0), hi, 13)
        shift = float(np.abs(z).max()) + 0.1
        table = _CTable(fam, p, model.r, target.tau, k - shift, k + shift,
                        v_nodes, fft)
        v_base = np.full(n_draws, v_t)
        c_here = table.eval(np.array([k]), np.array([v_t]))[0][0]
        c_jump = table.eval(k - z, v_base + zv)[0]
        move = np.expm1(z)
        num += lam * np.mean(move * (np.exp(z) * c_jump - c_here))
        den += lam * np.mean(move**2)
    if den < 1e-14:
        raise DegenerateInstrumentError(
            "minimum-variance denominator vanishes (no diffusive variance "
            "and no jumps at this state)")
    return float(num / den) - put_shift


# ---------------------------------------------------------------------------
# bookkeeping


@dataclass(frozen=True)
class PortfolioState:
    """Holdings after a rebalance: xi1 units of spot, lam2 second options,
    money units of the e^{rt} account standing at level bank."""

    xi1: np.ndarray
    lam2: np.ndarray
    money: np.ndarray
    bank: float


def portfolio_value(state: PortfolioState, s, p2=0.0):
    return state.xi1 * s + state.lam2 * p2 + state.money * state.bank


def portfolio_step(state: PortfolioState, s, p2, xi1_new, lam2_new,
                   r: float, dt: float) -> PortfolioState:
    """Advance dt, mark old holdings at the new prices, then rebalance with
    the money account absorbing the trade (negative balances allowed)."""
    bank = state.bank * float(np.exp(r * dt))
    trade = (np.asarray(xi1_new) - state.xi1) * s \
        + (np.asarray(lam2_new) - state.lam2) * p2
    money = state.money - trade / bank
    return PortfolioState(xi1=np.asarray(xi1_new, dtype=float),
                          lam2=np.asarray(lam2_new, dtype=float),
                          money=money, bank=bank)


@dataclass(frozen=True)
class HedgeLedger:
    """Per-rebalance record of one experiment: holdings, marks and portfolio
    value (post-trade), with the final column at settlement. ``greeks``
    carries the per-rebalance (delta, gamma, vega) stacks the ratios were
    built from."""

    steps: np.ndarray
    times: np.ndarray
    spot: np.ndarray
    p2: np.ndarray
    xi1: np.ndarray
    lam2: np.ndarray
    money: np.ndarray
    bank: np.ndarray
    value: np.ndarray
    premium: float
    greeks: Optional[dict] = None


# ---------------------------------------------------------------------------
# path engine


def _gauss_hermite(n):
    x, w = roots_hermite(n)
    return np.sqrt(2.0) * x, w / np.sqrt(np.pi)


def _gl_unit(n):
    x, w = roots_legendre(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _mv_jump_nodes(family, params):
    """Deterministic quadrature of the jump law for per-path engine fields:
    (z, zv, weight) nodes. The scalar mv_ratio keeps its Monte Carlo form;
    along paths the same integrals recur thousands of times, where fixed
    Gauss nodes are both cheaper and noise-free."""
    if family in ("jd", "svj"):
        zn, wn = _gauss_hermite(24)
        width = params.delta_s if family == "jd" else params.sigma_s
        return params.mu_s + width * zn, np.zeros_like(zn), wn
    un, wu = _gl_unit(12)
    zv = -params.mu_v * np.log(un)
    zn, wn = _gauss_hermite(12)
    z = params.mu_s + params.rho_j * zv[:, None] + params.sigma_s * zn[None, :]
    return z.ravel(), np.repeat(zv, len(zn)), (wu[:, None] * wn).ravel()


def _expiry_index(tau: float, dt: float, n_steps: int) -> int:
    n_t = int(round(tau / dt))
    if abs(n_t * dt - tau) > 1e-9:
        raise DomainError(f"target expiry {tau:.6g} is not a whole number of "
                          f"path steps of {dt:.6g}")
    if n_t < 1:
        raise DomainError("target expires before the first path step")
    if n_t > n_steps:
        raise DomainError(f"target expiry needs {n_t} steps but the paths "
                          f"carry only {n_steps}")
    return n_t


def _intrinsic(option: OptionSpec, s: np.ndarray) -> np.ndarray:
    if option.is_call:
        return np.maximum(s - option.strike, 0.0)
    return np.maximum(option.strike - s, 0.0)


def _v_node_grid(v: np.ndarray, n_nodes: int, headroom: float = 0.0):
    lo, hi = float(v.min()), float(v.max())
    pad = max(0.1 * max(hi, 1e-3), 1e-3)
    return np.linspace(max(lo - pad, 0.0), hi + pad + headroom, n_nodes)


class _StepPricer:
    """Greeks of one instrument for every path at one rebalance time."""

    def __init__(self, family, params, r, option, t, s, v, ctx,
                 k_pad=0.0, v_pad=0.0):
        self.option = _shifted(option, t)
        self.family, self.params, self.r = family, params, r
        self.s, self.v = s, v
        if family == "bs":
            self.table = None
            return
        v_nodes = None
        if family in _SV_FAMILIES:
            v_nodes = _v_node_grid(v, ctx.n_v_nodes, v_pad)
        k = np.log(self.option.strike / s)
        self.table = _CTable(family, params, r, self.option.tau,
                             float(k.min()) - k_pad - 0.1,
                             float(k.max()) + k_pad + 0.1, v_nodes, ctx.fft)

    def greeks(self):
        if self.family == "bs":
            return _bs_greeks_vec(self.s, self.option.strike, self.option.tau,
                                  self.r, self.params.sigma,
                                  self.option.is_call)
        return self.table.greeks(self.s, self.option.strike, self.option.tau,
                                 self.r, self.option.is_call, self.v)


def _engine_mv(pricer: _StepPricer, greeks, one_step_x, jump_nodes):
    """Per-path minimum-variance ratios at one rebalance time."""
    fam, p = pricer.family, pricer.params
    _, delta, _, vega = greeks
    if fam == "bs":
        return delta
    s, v = pricer.s, pricer.v
    k = np.log(pricer.option.strike / s)
    put_shift = 0.0 if pricer.option.is_call else 1.0

    if fam in ("vg", "cgmy"):
        spl = pricer.table.splines[0]
        grid = np.linspace(float(k.min()) - 1e-6, float(k.max()) + 1e-6, 129)
        if one_step_x is not None:
            x = one_step_x
            ds = np.expm1(x)
            dc = np.exp(x)[:, None] * spl(grid[None, :] - x[:, None]) \
                - spl(grid)[None, :]
            cov = (ds[:, None] * dc).mean(axis=0) - ds.mean() * dc.mean(axis=0)
            field = cov / ds.var()
        else:
            field = np.array([_levy_mv_ratio(p, spl, g) for g in grid])
        return CubicSpline(grid, field)(k) - put_shift

    delta = delta + put_shift   # call delta
    if fam == "jd":
        v_eff = np.full_like(s, p.sigma**2)
        rho_term = 0.0
        lam = p.lam
    else:
        v_eff = v
        rho_term = p.rho * p.sigma_v * v_eff * (vega / s)
        lam = getattr(p, "lam", 0.0)
    num = v_eff * delta + rho_term
    den = v_eff.astype(float)
    if lam > 0:
        z, zv, w = jump_nodes if jump_nodes is not None \
            else _mv_jump_nodes(fam, p)
        move = np.expm1(z)
        c_here = pricer.table.eval(k, v)[0]
        j1 = np.zeros_like(k)
        for zi, zvi, mi, wi in zip(z, zv, move, w):
            c_shift = pricer.table.eval(
                k - zi, None if v is None else v + zvi)[0]
            j1 += wi * mi * (np.exp(zi) * c_shift - c_here)
        num += lam * j1
        den += lam * float(np.sum(w * move**2))
    bad = den < 1e-14
    if np.any(bad):
        raise DegenerateInstrumentError(
            "minimum-variance denominator vanishes on path "
            f"{int(np.flatnonzero(bad)[0])} (zero variance state, no jumps)")
    return num / den - put_shift


def run_hedge_experiment(paths: PathMatrix, spec: HedgeSpec,
                         ctx: Optional[PricingContext] = None, r: float = 0.0,
                         with_ledger: bool = False):
    """Hedge a short target option along every path.

    Starts the book with the option premium, rebalances at every
    ``spec.rebalance_every``-th step via the spec's strategy, and settles
    the target at intrinsic value at expiry, marking any companion option
    with the hedge model at the final state. Returns terminal P&L per path
    (positive is hedger profit), plus the ledger when requested.

    Stochastic-vol hedge models read the per-path variance state off the
    path matrix when the simulator recorded one (the parametric simulator's
    variance, or the annualized conditional variance of the bootstrap
    generator); otherwise the calibrated v0 is held frozen.
    """
    ctx = ctx or PricingContext()
    fam = spec.family
    params = spec.hedge_model.params
    dt = paths.dt
    n_t = _expiry_index(spec.target.tau, dt, paths.n_steps)

    if spec.strategy == "delta_vega" and fam in ("jd", "vg", "cgmy"):
        raise DomainError(f"run_hedge_experiment: {fam} has no volatility "
                          "state to Vega-hedge along a path")

    v_grid = None
    if fam in _SV_FAMILIES:
        v_grid = paths.variances if paths.variances is not None \
            else np.full_like(paths.prices, params.v0)

    # minimum-variance precomputation: one-step law draws for the pure-jump
    # families, jump quadrature nodes and table padding for the others
    one_step_x = None
    jump_nodes = None
    k_pad = v_pad = 0.0
    if spec.strategy == "min_variance":
        if fam in ("vg", "cgmy"):
            rng = np.random.default_rng(ctx.mv_seed)
            if fam == "vg":
                one_step_x = _vg_one_step(params, r, dt, ctx.mv_draws, rng)
            else:
                try:
                    one_step_x = _chf_one_step(params, r, dt, ctx.mv_draws,
                                               rng)
                except NumericsError:
                    one_step_x = None   # jump-intensity limit instead
            k_pad = max(_levy_tail_spans(params)) + 0.1 if one_step_x is None \
                else float(np.abs(one_step_x).max()) + 0.1
        elif fam in ("jd", "svj", "svcj") and params.lam > 0:
            jump_nodes = _mv_jump_nodes(fam, params)
            k_pad = float(np.abs(jump_nodes[0]).max()) + 0.1
            v_pad = float(jump_nodes[1].max()) + 1e-3

    rebal_steps = np.arange(0, n_t, spec.rebalance_every)
    n_paths = paths.n_paths
    second = spec.second
    premium = ctx.premium
    state = None
    p2_mark = np.zeros(n_paths)
    led_cols = {"xi1": [], "lam2": [], "money": [], "value": [], "spot": [],
                "p2": []}
    led_bank = []
    led_greeks = {"target": [], "second": []} if with_ledger else None

    for j, step in enumerate(rebal_steps):
        t = step * dt
        s = paths.prices[:, step]
        v = v_grid[:, step] if v_grid is not None else None
        pricer_t = _StepPricer(fam, params, r, spec.target, t, s, v, ctx,
                               k_pad, v_pad)
        greeks_t = pricer_t.greeks()
        greeks_2 = None
        if second is not None:
            pricer_2 = _StepPricer(fam, params, r, second, t, s, v, ctx)
            greeks_2 = pricer_2.greeks()
            p2_mark = greeks_2[0]

        if spec.strategy == "delta":
            xi1, lam2 = greeks_t[1], np.zeros(n_paths)
        elif spec.strategy == "min_variance":
            xi1 = _engine_mv(pricer_t, greeks_t, one_step_x, jump_nodes)
            lam2 = np.zeros(n_paths)
        else:
            comp = 2 if spec.strategy == "delta_gamma" else 3
            den = greeks_2[comp]
            bad = np.abs(den) < _DEGENERATE_TOL
            if np.any(bad):
                raise DegenerateInstrumentError(
                    f"{spec.strategy}: second instrument sensitivity vanishes"
                    f" on path {int(np.flatnonzero(bad)[0])} at step {step}")
            lam2 = greeks_t[comp] / den
            xi1 = greeks_t[1] - lam2 * greeks_2[1]

        if j == 0:
            if premium is None:
                premium = float(greeks_t[0][0])
            if not premium > 0:
                raise DomainError("run_hedge_experiment: inception premium "
                                  "must be positive")
            if second is not None:
                entry = ctx.second_premium
                p2_mark = np.full(n_paths, float(p2_mark[0]) if entry is None
                                  else entry)
            money = premium - xi1 * s - lam2 * p2_mark
            state = PortfolioState(xi1=np.asarray(xi1, dtype=float),
                                   lam2=np.asarray(lam2, dtype=float),
                                   money=np.asarray(money, dtype=float),
                                   bank=1.0)
        else:
            gap = (step - rebal_steps[j - 1]) * dt
            state = portfolio_step(state, s, p2_mark, xi1, lam2, r, gap)

        if with_ledger:
            led_cols["xi1"].append(state.xi1.copy())
            led_cols["lam2"].append(state.lam2.copy())
            led_cols["money"].append(state.money.copy())
            led_cols["spot"].append(s.copy())
            led_cols["p2"].append(np.array(p2_mark, dtype=float, copy=True))
            led_cols["value"].append(portfolio_value(state, s, p2_mark))
            led_bank.append(state.bank)
            led_greeks["target"].append(np.stack(greeks_t[1:]))
            led_greeks["second"].append(
                np.stack(greeks_2[1:]) if greeks_2 is not None else None)

    # settlement at target expiry
    gap = (n_t - rebal_steps[-1]) * dt
    bank_t = state.bank * float(np.exp(r * gap))
    s_t = paths.prices[:, n_t]
    if second is not None:
        tau2_left = second.tau - n_t * dt
        if tau2_left > 1e-9:
            v_t = v_grid[:, n_t] if v_grid is not None else None
            pricer_2 = _StepPricer(fam, params, r, second, n_t * dt, s_t,
                                   v_t, ctx)
            p2_final = pricer_2.greeks()[0]
        else:
            p2_final = _intrinsic(second, s_t)
    else:
        p2_final = np.zeros(n_paths)
    value_t = state.xi1 * s_t + state.lam2 * p2_final + state.money * bank_t
    pnl = value_t - _intrinsic(spec.target, s_t)

    if not with_ledger:
        return pnl
    steps_all = np.append(rebal_steps, n_t)
    ledger = HedgeLedger(
        steps=steps_all, times=steps_all * dt,
        spot=np.column_stack(led_cols["spot"] + [s_t]),
        p2=np.column_stack(led_cols["p2"] + [p2_final]),
        xi1=np.column_stack(led_cols["xi1"] + [state.xi1]),
        lam2=np.column_stack(led_cols["lam2"] + [state.lam2]),
        money=np.column_stack(led_cols["money"] + [state.money]),
        bank=np.append(np.asarray(led_bank), bank_t),
        value=np.column_stack(led_cols["value"] + [value_t]),
        premium=premium, greeks=led_greeks)
    return pnl, ledger


def write_pnl_csv(path, pnl, rel_pnl) -> None:
    """Persist terminal results as `path_id,pnl,rel_pnl` rows."""
    pnl = np.asarray(pnl, dtype=float)
    rel = np.asarray(rel_pnl, dtype=float)
    if pnl.shape != rel.shape or pnl.ndim != 1:
        raise DomainError("write_pnl_csv: pnl and rel_pnl must be matching "
                          "1-d arrays")
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "pnl", "rel_pnl"])
        for i, (a, b) in enumerate(zip(pnl, rel)):
            writer.writerow([i, repr(float(a)), repr(float(b))])
