"""Closed-form European FX call and PRDC prices under constant volatilities.

Under the domestic forward measure log S_t is Gaussian with variance sigma^2(0, t) = 2 mu(0, t),
so the call has a Black-type price on the forward S_0 P^f / P^d.
"""

from __future__ import annotations

import math

from .gaussian import norm_cdf
from .model import ModelParams
from .payoff import ProductSpec, call_decomposition


class DegenerateModelError(ArithmeticError):
    """Total log-spot variance is not positive."""


def mu_sigma(p: ModelParams, t: float) -> tuple[float, float]:
    """Half total variance mu(0, t) of log S_t and the matching volatility sqrt(2 mu)."""
    if not t > 0:
        raise ValueError("maturity must be positive")
    ss, sf, sd = p.sigma_s, p.sigma_f, p.sigma_d
    mu = (0.5 * (ss * ss * t + sf * sf * t ** 3 / 3.0 + sd * sd * t ** 3 / 3.0)
          + p.rho_sf * ss * sf * t * t / 2.0
          - p.rho_sd * ss * sd * t * t / 2.0
          - p.rho_df * sf * sd * t ** 3 / 3.0)
    if not mu > 0:
        raise DegenerateModelError(f"non-positive total variance at t={t} (mu={mu:.3e})")
    sigma = math.sqrt(2.0 * mu)
    assert abs(sigma * sigma - 2.0 * mu) <= 1e-14 * max(1.0, mu)
    return mu, sigma


def european_call(p: ModelParams, strike: float, t: float) -> float:
    """Price of a call on S_t paying (S_t - K)_+ at t, in domestic currency."""
    if strike < 0:
        raise ValueError("strike must be non-negative")
    fwd_f = p.s0 * p.curve_f(t)
    pd = p.curve_d(t)
    if strike == 0:
        return fwd_f
    mu, sigma = mu_sigma(p, t)
    m = math.log(fwd_f / (strike * pd))
    d_plus = (m + mu) / sigma
    d_minus = (m - mu) / sigma
    return fwd_f * norm_cdf(d_plus) - strike * pd * norm_cdf(d_minus)


def european_prdc(p: ModelParams, spec: ProductSpec, t: float | None = None) -> float:
    """European PRDC coupon at a single date: Floor P^d + a (C(K2) - C(K1))."""
    if spec.payoff is not None:
        raise ValueError("closed form only covers the PRDC payoff")
    if t is None:
        if spec.n_dates != 1:
            raise ValueError("pass t or a single-date product")
        k = 1
    else:
        matches = [i for i, d in enumerate(spec.exercise_dates) if abs(d - t) <= 1e-12]
        if not matches:
            raise ValueError(f"t={t} is not an exercise date")
        k = matches[0] + 1
    tk = float(spec.exercise_dates[k - 1])
    floor, a, k1, k2 = call_decomposition(spec, k)
    return floor * p.curve_d(tk) + a * (european_call(p, k2, tk) - european_call(p, k1, tk))
