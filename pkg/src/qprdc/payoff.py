"""PRDC coupon payoff, its call-spread decomposition and the discounted obstacle h_k(x, y)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .model import ModelParams, phi_d, phi_f


class ProductError(ValueError):
    pass


def _per_date(value, n: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ProductError(f"{name} must be a scalar or have one entry per exercise date ({n})")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ProductSpec:
    """PRDC schedule with per-date coupons and collar.

    ``exercisable`` marks which dates carry an exercise right (default: all); dates
    without one are pure monitoring dates. ``payoff`` optionally replaces the PRDC
    coupon by any function ``payoff(k, s)`` of the date index (1-based) and spot.
    """

    exercise_dates: np.ndarray
    cd: np.ndarray
    cf: np.ndarray
    cap: np.ndarray
    floor: np.ndarray
    s0_ref: float
    exercisable: Optional[np.ndarray] = None
    payoff: Optional[Callable[[int, np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        dates = np.array(self.exercise_dates, dtype=float).ravel()
        if dates.size == 0:
            raise ProductError("at least one exercise date is required")
        if dates[0] <= 0 or np.any(np.diff(dates) <= 0):
            raise ProductError("exercise dates must be positive and strictly increasing")
        dates.setflags(write=False)
        n = dates.size
        object.__setattr__(self, "exercise_dates", dates)
        for name in ("cd", "cf", "cap", "floor"):
            object.__setattr__(self, name, _per_date(getattr(self, name), n, name))
        ex = np.ones(n, dtype=bool) if self.exercisable is None else np.array(self.exercisable, dtype=bool)
        if ex.shape != (n,):
            raise ProductError("exercisable must have one flag per date")
        ex.setflags(write=False)
        object.__setattr__(self, "exercisable", ex)
        if not self.s0_ref > 0:
            raise ProductError("s0_ref must be positive")
        if np.any(self.floor > self.cap):
            raise ProductError("floor must not exceed cap")
        if np.any(self.cf <= 0):
            raise ProductError("Cf must be positive")

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProductSpec):
            return NotImplemented
        arrays = ("exercise_dates", "cd", "cf", "cap", "floor", "exercisable")
        return (self.s0_ref == other.s0_ref and self.payoff is other.payoff
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))

    __hash__ = None

    @property
    def n_dates(self) -> int:
        return int(self.exercise_dates.size)

    @classmethod
    def prdc(cls, dates, cd, cf, cap, floor, s0_ref, **kw) -> "ProductSpec":
        return cls(np.atleast_1d(dates), cd, cf, cap, floor, s0_ref, **kw)

    def single_date(self, k: int) -> "ProductSpec":
        """European product paying the date-k coupon only (k is 1-based)."""
        i = k - 1
        return ProductSpec(
            self.exercise_dates[i:i + 1], self.cd[i], self.cf[i], self.cap[i], self.floor[i],
            self.s0_ref, payoff=_shift_payoff(self.payoff, i),
        )

    def with_payoff(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> "ProductSpec":
        return ProductSpec(self.exercise_dates, self.cd, self.cf, self.cap, self.floor,
                           self.s0_ref, self.exercisable, fn)

    def with_exercisable(self, flags) -> "ProductSpec":
        return ProductSpec(self.exercise_dates, self.cd, self.cf, self.cap, self.floor,
                           self.s0_ref, np.asarray(flags, dtype=bool), self.payoff)

    def psi(self, k: int, s):
        """Coupon paid when exercising at date k (1-based) with spot s."""
        if not 1 <= k <= self.n_dates:
            raise ProductError(f"date index {k} out of range 1..{self.n_dates}")
        if self.payoff is not None:
            return self.payoff(k, np.asarray(s, dtype=float))
        return prdc_payoff(self, k, s)

    def to_dict(self) -> dict:
        if self.payoff is not None:
            raise ProductError("custom payoffs cannot be serialised")
        d = {
            "exercise_dates": self.exercise_dates.tolist(),
            "Cd": self.cd.tolist(),
            "Cf": self.cf.tolist(),
            "cap": self.cap.tolist(),
            "floor": self.floor.tolist(),
            "s0_ref": self.s0_ref,
        }
        if not np.all(self.exercisable):
            d["exercisable"] = self.exercisable.tolist()
        return d


def _shift_payoff(fn, i):
    if fn is None:
        return None
    return lambda k, s: fn(k + i, s)


def product_from_dict(d: dict) -> ProductSpec:
    """Build a ProductSpec from the product JSON layout (scalars broadcast per date)."""
    try:
        dates = np.atleast_1d(np.asarray(d["exercise_dates"], dtype=float))
        return ProductSpec(
            dates, d["Cd"], d["Cf"], d["cap"], d["floor"], float(d["s0_ref"]),
            exercisable=d.get("exercisable"),
        )
    except KeyError as exc:
        raise ProductError(f"product config is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ProductError(f"invalid product config: {exc}") from None


def load_product(path) -> ProductSpec:
    with open(path) as fh:
        return product_from_dict(json.load(fh))


def prdc_payoff(spec: ProductSpec, k: int, s):
    """min(max(Cf/s0_ref s - Cd, Floor), Cap) at date k (1-based)."""
    i = k - 1
    s = np.asarray(s, dtype=float)
    raw = spec.cf[i] / spec.s0_ref * s - spec.cd[i]
    out = np.minimum(np.maximum(raw, spec.floor[i]), spec.cap[i])
    return float(out) if out.ndim == 0 else out


def call_decomposition(spec: ProductSpec, k: int):
    """(floor, a, K1, K2) with payoff = floor - a (s - K1)_+ + a (s - K2)_+ and K2 <= K1."""
    i = k - 1
    a = spec.cf[i] / spec.s0_ref
    k1 = (spec.cap[i] + spec.cd[i]) / spec.cf[i] * spec.s0_ref
    k2 = (spec.floor[i] + spec.cd[i]) / spec.cf[i] * spec.s0_ref
    return float(spec.floor[i]), float(a), float(k1), float(k2)


def obstacle_h(params: ModelParams, spec: ProductSpec, k: int, x, y):
    """Discounted exercise value h_k(x, y) = phi_d e^{-y} psi(S_0 phi_f/phi_d e^{-sigma_S^2 t/2 + x + y})."""
    t = float(spec.exercise_dates[k - 1])
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pd = phi_d(params, t)
    s = params.s0 * (phi_f(params, t) / pd) * np.exp(-0.5 * params.sigma_s ** 2 * t + x + y)
    out = pd * np.exp(-y) * spec.psi(k, s)
    return float(out) if np.ndim(out) == 0 else out
