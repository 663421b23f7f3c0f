"""Scenario generators: parametric jump-diffusion paths and a semi-parametric
GARCH-filtered bootstrap.

The jump-diffusion simulator walks daily log-Euler steps with the variance
state full-truncated at zero and at most one compensated jump per step. The
bootstrap route fits GARCH(1,1) by Gaussian quasi-maximum likelihood,
de-garches the returns, and resamples the standardized residuals through a
Gaussian-kernel smoother (physical measure, no drift adjustment).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter
from scipy.stats import norm

from .errors import ConvergenceError, DomainError
from .models import SvcjParams, svcj_mean_jump

__all__ = [
    "DT_DAILY",
    "PathMatrix",
    "GarchFit",
    "KdeSampler",
    "log_returns",
    "simulate_svcj",
    "fit_garch11",
    "kde_density",
    "simulate_garch_kde",
]

DT_DAILY = 1.0 / 365.0


@dataclass(frozen=True)
class PathMatrix:
    """Simulated price grid: one row per path, one column per day including
    inception. ``variances`` carries the annualized per-step variance state
    when the generator has one (jump-diffusion state, or the GARCH
    conditional variance as a proxy)."""

    prices: np.ndarray
    dt: float
    seed: int
    variances: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=float)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 2:
            raise DomainError("PathMatrix: prices must be n_paths x (n_steps+1)")
        if not np.all(p > 0):
            raise DomainError("PathMatrix: prices must be strictly positive")
        if np.any(p[:, 0] != p[0, 0]):
            raise DomainError("PathMatrix: all paths must start at the same spot")
        if not self.dt > 0:
            raise DomainError("PathMatrix: dt must be positive")
        if self.variances is not None:
            v = np.asarray(self.variances, dtype=float)
            if v.shape != p.shape:
                raise DomainError("PathMatrix: variances must match prices shape")
            if np.any(v < 0):
                raise DomainError("PathMatrix: variances must be nonnegative")
        object.__setattr__(self, "prices", p)

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.prices.shape[1] - 1

    @property
    def s0(self) -> float:
        return float(self.prices[0, 0])

    def save(self, path) -> None:
        payload = {"prices": self.prices, "dt": np.float64(self.dt),
                   "seed": np.uint64(self.seed)}
        if self.variances is not None:
            payload["variances"] = self.variances
        np.savez_compressed(Path(path), **payload)

    @classmethod
    def load(cls, path) -> "PathMatrix":
        with np.load(Path(path)) as data:
            variances = data["variances"] if "variances" in data.files else None
            return cls(prices=data["prices"], dt=float(data["dt"]),
                       seed=int(data["seed"]), variances=variances)


def log_returns(closes) -> np.ndarray:
    closes = np.asarray(closes, dtype=float)
    if closes.ndim != 1 or closes.size < 2:
        raise DomainError("log_returns: need a 1-d series of at least 2 closes")
    if np.any(closes <= 0):
        raise DomainError("log_returns: closes must be positive")
    return np.diff(np.log(closes))


def simulate_svcj(p: SvcjParams, s0: float, r: float, n_paths: int,
                  n_steps: int, dt: float = DT_DAILY, seed: int = 0) -> PathMatrix:
    """Daily log-Euler paths of the correlated-jump stochastic-vol model.

    Per step: correlated Gaussian shocks for price and variance, a
    Bernoulli(lam dt) jump indicator, exponential variance jumps and
    conditionally Gaussian price jumps. The drift carries the jump
    compensator r - lam*mean_jump so discounted prices stay centered on s0.
    Every random draw happens on every step, so path k is identical whether
    or not other paths jump (bit-reproducible given the seed).
    """
    if not s0 > 0:
        raise DomainError("simulate_svcj: s0 must be positive")
    if n_paths < 1 or n_steps < 1:
        raise DomainError("simulate_svcj: n_paths and n_steps must be >= 1")
    if not dt > 0:
        raise DomainError("simulate_svcj: dt must be positive")

    mu_bar = svcj_mean_jump(p.mu_s, p.sigma_s, p.rho_j, p.mu_v)
    rho_orth = np.sqrt(1.0 - p.rho**2)
    drift = (r - p.lam * mu_bar) * dt
    jump_prob = p.lam * dt

    rng = np.random.default_rng(seed)
    prices = np.empty((n_paths, n_steps + 1))
    variances = np.empty((n_paths, n_steps + 1))
    log_s = np.full(n_paths, np.log(s0))
    v = np.full(n_paths, float(p.v0))
    prices[:, 0] = s0
    variances[:, 0] = v

    for k in range(n_steps):
        z1 = rng.standard_normal(n_paths)
        z2 = rng.standard_normal(n_paths)
        u = rng.random(n_paths)
        zv = rng.exponential(p.mu_v, n_paths)
        zs = p.mu_s + p.rho_j * zv + p.sigma_s * rng.standard_normal(n_paths)
        jump = u < jump_prob

        v_plus = np.maximum(v, 0.0)
        vol_step = np.sqrt(v_plus * dt)
        log_s = log_s + drift - 0.5 * v_plus * dt + vol_step * z1 \
            + np.where(jump, zs, 0.0)
        w_v = p.rho * z1 + rho_orth * z2
        v = v + p.kappa * (p.theta - v_plus) * dt + p.sigma_v * vol_step * w_v \
            + np.where(jump, zv, 0.0)
        v = np.maximum(v, 0.0)

        prices[:, k + 1] = np.exp(log_s)
        variances[:, k + 1] = v

    return PathMatrix(prices=prices, dt=dt, seed=seed, variances=variances)


@dataclass(frozen=True)
class GarchFit:
    """GARCH(1,1) coefficients with the conditional-vol filtration and the
    de-garched residuals of the input returns."""

    omega: float
    alpha: float
    beta: float
    sigma_series: np.ndarray
    residuals: np.ndarray

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError("GarchFit: omega must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("GarchFit: alpha and beta must be nonnegative")
        if not self.alpha + self.beta < 1:
            raise DomainError("GarchFit: alpha + beta must be below 1 "
                              "(stationarity)")
        if len(self.sigma_series) != len(self.residuals):
            raise DomainError("GarchFit: series lengths differ")


def _garch_sigma2(x, r2_lag, s2_init):
    """Conditional-variance recursion sigma2_t = omega + alpha R_{t-1}^2 +
    beta sigma2_{t-1}, vectorized as a linear filter."""
    omega, alpha, beta = x
    driven = omega + alpha * r2_lag
    tail, _ = lfilter([1.0], [1.0, -beta], driven, zi=[beta * s2_init])
    return np.concatenate(([s2_init], tail))


def _garch_nll(x, returns, r2_lag, s2_init):
    """Negative Gaussian log likelihood, infinite outside the feasible box so
    an unconstrained simplex search stays inside it."""
    omega, alpha, beta = x
    if omega <= 0 or alpha < 0 or beta < 0 or alpha + beta > 0.999:
        return np.inf
    sigma2 = _garch_sigma2(x, r2_lag, s2_init)
    if np.any(sigma2 <= 0) or not np.all(np.isfinite(sigma2)):
        return np.inf
    return 0.5 * float(np.sum(np.log(sigma2) + returns**2 / sigma2))


def fit_garch11(log_rets) -> GarchFit:
    """Gaussian quasi-maximum-likelihood GARCH(1,1) fit.

    The recursion runs on returns standardized by their sample deviation so
    all three coordinates sit at comparable scale (raw omega is several
    orders below alpha and beta, which stalls gradient-free steps). The
    first conditional variance is pinned to the sample variance; several
    starting points guard against the flat-likelihood ridge at alpha ~ 0.
    """
    returns = np.asarray(log_rets, dtype=float)
    if returns.ndim != 1 or returns.size < 100:
        raise DomainError("fit_garch11: need at least 100 return observations")
    s2_raw = float(np.var(returns))
    if s2_raw <= 0:
        raise DomainError("fit_garch11: returns are constant (degenerate "
                          "likelihood)")
    scaled = returns / np.sqrt(s2_raw)
    r2_lag = scaled[:-1] ** 2
    args = (scaled, r2_lag, 1.0)

    starts = ((0.05, 0.05, 0.90), (0.20, 0.10, 0.70), (0.70, 0.15, 0.15))
    best = None
    for x0 in starts:
        res = minimize(_garch_nll, x0, args=args, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-10,
                                "maxiter": 4000, "maxfev": 4000})
        if not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best.fun:
            best = res
    if best is None:
        raise ConvergenceError("fit_garch11: likelihood optimization failed "
                               "from every start")
    omega_s, alpha, beta = best.x
    sigma2 = _garch_sigma2(best.x, r2_lag, 1.0) * s2_raw
    sigma = np.sqrt(sigma2)
    return GarchFit(omega=float(omega_s * s2_raw), alpha=float(alpha),
                    beta=float(beta), sigma_series=sigma,
                    residuals=returns / sigma)


@dataclass(frozen=True)
class KdeSampler:
    """Gaussian-kernel density over standardized residuals; sampling is the
    smoothed bootstrap (uniform pick plus N(0, h^2) noise)."""

    residuals: np.ndarray
    h: float = 0.2

    def __post_init__(self):
        res = np.asarray(self.residuals, dtype=float)
        if res.ndim != 1 or res.size < 1:
            raise DomainError("KdeSampler: residuals must be a nonempty 1-d array")
        if not self.h > 0:
            raise DomainError("KdeSampler: bandwidth must be positive")
        object.__setattr__(self, "residuals", res)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = rng.integers(0, self.residuals.size, size)
        return self.residuals[idx] + self.h * rng.standard_normal(size)


def kde_density(sampler: KdeSampler, z):
    """Kernel mixture density (1/nh) sum K((z - z_i)/h) at the points z."""
    z = np.asarray(z, dtype=float)
    gaps = (z[..., None] - sampler.residuals) / sampler.h
    out = norm.pdf(gaps).mean(axis=-1) / sampler.h
    return out if out.ndim else float(out)


def simulate_garch_kde(fit: GarchFit, sampler: KdeSampler, s0: float,
                       n_paths: int, n_steps: int, seed: int = 0,
                       dt: float = DT_DAILY) -> PathMatrix:
    """Bootstrap paths: iterate the fitted variance recursion forward, feed it
    smoothed-bootstrap residual draws and accumulate s0 exp(sum sigma_k z_k).

    The recorded variance grid is the conditional daily variance annualized
    by 1/dt so downstream consumers see the same units as the parametric
    simulator.
    """
    if not s0 > 0:
        raise DomainError("simulate_garch_kde: s0 must be positive")
    if n_paths < 1 or n_steps < 1:
        raise DomainError("simulate_garch_kde: n_paths and n_steps must be >= 1")
    if not dt > 0:
        raise DomainError("simulate_garch_kde: dt must be positive")

    rng = np.random.default_rng(seed)
    last_r = fit.residuals[-1] * fit.sigma_series[-1]
    last_s2 = fit.sigma_series[-1] ** 2
    sigma2 = np.full(n_paths, fit.omega + fit.alpha * last_r**2
                     + fit.beta * last_s2)

    prices = np.empty((n_paths, n_steps + 1))
    variances = np.empty((n_paths, n_steps + 1))
    prices[:, 0] = s0
    variances[:, 0] = sigma2 / dt
    log_s = np.full(n_paths, np.log(s0))
    for k in range(n_steps):
        z = sampler.sample(rng, n_paths)
        step_ret = np.sqrt(sigma2) * z
        log_s = log_s + step_ret
        prices[:, k + 1] = np.exp(log_s)
        sigma2 = fit.omega + fit.alpha * step_ret**2 + fit.beta * sigma2
        variances[:, k + 1] = sigma2 / dt

    return PathMatrix(prices=prices, dt=dt, seed=seed, variances=variances)
