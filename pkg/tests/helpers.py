"""Shared market set-up and independent oracles for the test-suite."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize

from qprdc.model import InitialCurve, ModelParams
from qprdc.payoff import ProductSpec

S0 = 88.17
MARKET_CORR = dict(rho_sf=-0.0272, rho_sd=0.1574, rho_df=0.6558)
ZERO_CORR = dict(rho_sf=0.0, rho_sd=0.0, rho_df=0.0)

# closed-form table values, in percent of notional
TABLE_ZERO = {(2, 0.005): 2.171945242, (5, 0.005): 1.630435483, (10, 0.005): 1.127330259,
              (2, 0.05): 2.159404007, (5, 0.05): 1.539295559, (10, 0.05): 0.8013151892}
TABLE_CORR = {(2, 0.005): 2.173803852, (5, 0.005): 1.636518082, (10, 0.005): 1.141944391,
              (2, 0.05): 2.185536786, (5, 0.05): 1.652226813, (10, 0.05): 1.103531914}


def market_params(sigma: float = 0.005, correlated: bool = False, **over) -> ModelParams:
    kw = dict(s0=S0, sigma_s=0.5, sigma_d=sigma, sigma_f=sigma,
              curve_d=InitialCurve.flat(0.015), curve_f=InitialCurve.flat(0.01))
    kw.update(MARKET_CORR if correlated else ZERO_CORR)
    kw.update(over)
    return ModelParams(**kw)


def prdc_product(dates, **over) -> ProductSpec:
    kw = dict(cd=0.15, cf=0.189, cap=0.0555, floor=0.0, s0_ref=S0)
    kw.update(over)
    return ProductSpec.prdc(np.atleast_1d(np.asarray(dates, dtype=float)), **kw)


def yearly(T: int) -> np.ndarray:
    return np.arange(1, T + 1, dtype=float)


# -- oracles -------------------------------------------------------------------

def _phi(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def plackett_bvn(h: float, k: float, rho: float) -> float:
    """P(U <= h, V <= k) by integrating the density derivative in the correlation."""
    def dens(r):
        s = 1.0 - r * r
        return math.exp(-(h * h - 2 * r * h * k + k * k) / (2 * s)) / (2 * math.pi * math.sqrt(s))

    base = 0.5 * math.erfc(-h / math.sqrt(2)) * 0.5 * math.erfc(-k / math.sqrt(2))
    val, _ = integrate.quad(dens, 0.0, rho, epsabs=1e-15, epsrel=1e-13, limit=200)
    return base + val


def quad_cell(a: float, b: float, fn) -> float:
    # split at the origin so the density peak never sits inside a huge interval
    lo, hi = max(a, -40.0), min(b, 40.0)
    pieces = [lo, 0.0, hi] if lo < 0.0 < hi else [lo, hi]
    total = 0.0
    for x0, x1 in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(lambda x: fn(x) * _phi(x), x0, x1, epsabs=1e-15, epsrel=1e-13, limit=200)
        total += val
    return total


def quad_distortion(points) -> float:
    """Quantization error of a standard-normal grid by adaptive quadrature per cell."""
    z = np.asarray(points, dtype=float)
    e = np.concatenate(([-np.inf], 0.5 * (z[1:] + z[:-1]), [np.inf]))
    return sum(quad_cell(e[i], e[i + 1], lambda x, zi=z[i]: (x - zi) ** 2) for i in range(z.size))


def two_point_quantizer() -> float:
    """Positive point of the optimal symmetric 2-quantizer, by bisection on stationarity."""
    def gap(z):
        mass = quad_cell(0.0, np.inf, lambda x: 1.0)
        mean = quad_cell(0.0, np.inf, lambda x: x) / mass
        return z - mean

    return optimize.bisect(gap, 0.1, 3.0, xtol=1e-15)


def bisect_inv_cdf(p: float) -> float:
    return optimize.bisect(lambda x: 0.5 * math.erfc(-x / math.sqrt(2)) - p, -10, 10, xtol=1e-15)
