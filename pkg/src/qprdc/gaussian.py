"""Univariate and bivariate standard normal distribution functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, ndtr, ndtri

from . import kernels

# mass below which a Voronoi cell is treated as empty
EMPTY_CELL_MASS = 1e-300
# half-widths below this (relative to the midpoint) use a Taylor expansion
NARROW_CELL = 5e-5
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


class EmptyCellError(ArithmeticError):
    """Raised when a cell carries (numerically) no probability mass."""


@dataclass(frozen=True)
class Correlation:
    rho: float

    def __post_init__(self):
        if not (-1.0 <= self.rho <= 1.0) or math.isnan(self.rho):
            raise ValueError(f"correlation must lie in [-1, 1], got {self.rho}")

    def __float__(self):
        return float(self.rho)


def _rho(rho) -> float:
    return float(rho) if isinstance(rho, Correlation) else float(Correlation(float(rho)))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf(x):
    """Standard normal CDF; accepts scalars, arrays and +-inf."""
    out = ndtr(x)
    return float(out) if np.ndim(out) == 0 else out


def norm_inv_cdf(p):
    """Inverse of :func:`norm_cdf` on the open interval (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise ValueError("norm_inv_cdf is defined on the open interval (0, 1)")
    out = ndtri(p_arr)
    return float(out) if out.ndim == 0 else out


def interval_mass(a, b):
    """P(a < Z <= b) for Z ~ N(0, 1).

    Differences are taken where they do not cancel: erf near the origin, and the
    complementary function on the side of whichever tail the cell lies in.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        central = 0.5 * (erf(b * _INV_SQRT2) - erf(a * _INV_SQRT2))
    upper = ndtr(-a) - ndtr(-b)
    lower = ndtr(b) - ndtr(a)
    near0 = (np.abs(a) < 1.0) & (np.abs(b) < 1.0)
    return np.where(near0, central, np.where(a > 0, upper, lower))


def gauss_cell_moments(a, b, *, strict: bool = True):
    """Mass and conditional mean of a standard normal restricted to (a, b].

    With ``strict=False`` empty cells return ``nan`` centroids instead of raising,
    which is what the vectorised quantizer code wants.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(a_arr > b_arr):
        raise ValueError("cell bounds must satisfy a <= b")
    mass = interval_mass(a_arr, b_arr)
    first = norm_pdf(a_arr) - norm_pdf(b_arr)
    # very narrow cells: expand around the midpoint instead of differencing
    with np.errstate(invalid="ignore"):
        m = 0.5 * (a_arr + b_arr)
        h = 0.5 * (b_arr - a_arr)
        narrow = np.isfinite(m) & (h < NARROW_CELL * np.maximum(1.0, np.abs(m)))
    h2 = np.where(narrow, h * h, 0.0)
    mt = np.where(narrow, m, 0.0)
    if np.any(narrow):
        t_mass = 2.0 * h * norm_pdf(mt) * (1.0 + (mt * mt - 1.0) * h2 / 6.0)
        mass = np.where(narrow, t_mass, mass)
    empty = mass < EMPTY_CELL_MASS
    if strict and np.any(empty):
        raise EmptyCellError(f"cell ({a}, {b}] has no mass")
    with np.errstate(invalid="ignore", divide="ignore"):
        centroid = first / np.where(empty, 1.0, mass)
    # the narrow-cell centroid is taken directly so tiny masses cannot underflow it
    centroid = np.where(narrow, mt - mt * h2 / 3.0, centroid)
    centroid = np.where(empty, np.nan, centroid)
    if mass.ndim == 0:
        return float(mass), float(centroid)
    return mass, centroid


def bivar_cdf(u, v, rho):
    """F(u, v) = P(U <= u, V <= v) for a standard normal pair with correlation ``rho``."""
    out = kernels.bvn_cdf(u, v, _rho(rho))
    return float(out) if np.ndim(out) == 0 else out


def bivar_rect_prob(u1, u2, v1, v2, rho):
    """P(u1 < U <= u2, v1 < V <= v2) by inclusion-exclusion of the CDF."""
    r = _rho(rho)
    u1, u2, v1, v2 = (np.asarray(t, dtype=float) for t in (u1, u2, v1, v2))
    if np.any(u1 > u2) or np.any(v1 > v2):
        raise ValueError("rectangle bounds must satisfy u1 <= u2 and v1 <= v2")
    f = kernels.bvn_cdf
    p = f(u2, v2, r) - f(u1, v2, r) - f(u2, v1, r) + f(u1, v1, r)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p
