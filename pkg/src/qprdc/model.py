"""Three-factor Gaussian FX model: parameters, discount functions, state law and simulation.

The state is the zero-mean Gaussian vector ``(X_t, W^f_t, Y_t, W^d_t)`` with

    X_t = sigma_S W^S_t + sigma_f int_0^t (t - s) dW^f_s
    Y_t = -sigma_d int_0^t (t - s) dW^d_s

and the FX spot is recovered as ``S_t = S_0 phi_f(t) / phi_d(t) exp(-sigma_S^2 t / 2 + X_t + Y_t)``.
Every component is a stochastic integral of a polynomial in ``(t_end - s)``, so all
covariances are closed-form polynomials in the horizon.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

STATE_NAMES = ("X", "Wf", "Y", "Wd")
PSD_TOL = 1e-12
# paths per random substream in simulate_states
SIM_BLOCK = 1 << 16

# Brownian drivers, in this order: W^S, W^f, W^d.
_S, _F, _D = 0, 1, 2


class ModelError(ValueError):
    """Inconsistent model inputs (bad correlations, curves or dates)."""


@dataclass(frozen=True)
class InitialCurve:
    """Initial discount curve t -> P(0, t).

    Either flat (``rate`` set) or tabulated by ``tenors``/``discounts`` with log-linear
    interpolation and flat-forward extrapolation beyond the last tenor.
    """

    rate: float | None = None
    tenors: tuple[float, ...] = ()
    discounts: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rate is not None:
            if self.tenors or self.discounts:
                raise ModelError("a curve is either flat or tabulated, not both")
            if not math.isfinite(self.rate):
                raise ModelError("flat rate must be finite")
            return
        t = np.asarray(self.tenors, dtype=float)
        d = np.asarray(self.discounts, dtype=float)
        if t.size < 2 or t.shape != d.shape:
            raise ModelError("tabulated curve needs at least two (tenor, discount) pairs")
        if t[0] != 0.0 or d[0] != 1.0:
            raise ModelError("tabulated curve must start at (0, 1)")
        if np.any(np.diff(t) <= 0):
            raise ModelError("curve tenors must be strictly increasing")
        if np.any(d <= 0) or np.any(d > 1) or np.any(np.diff(d) > 0):
            raise ModelError("curve discounts must lie in (0, 1] and be nonincreasing")

    @classmethod
    def flat(cls, rate: float) -> "InitialCurve":
        return cls(rate=float(rate))

    @classmethod
    def from_csv(cls, path) -> "InitialCurve":
        """Read a ``tenor_years,discount`` CSV file."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["tenor_years", "discount"]:
                raise ModelError(f"{path}: expected header 'tenor_years,discount'")
            rows = [(float(r["tenor_years"]), float(r["discount"])) for r in reader]
        return cls(tenors=tuple(r[0] for r in rows), discounts=tuple(r[1] for r in rows))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ModelError("discount requested at negative time")
        if self.rate is not None:
            out = np.exp(-self.rate * t)
        else:
            tn = np.asarray(self.tenors)
            logd = np.log(np.asarray(self.discounts))
            out = np.exp(np.interp(t, tn, logd))
            beyond = t > tn[-1]
            if np.any(beyond):
                fwd = (logd[-1] - logd[-2]) / (tn[-1] - tn[-2])
                out = np.where(beyond, np.exp(logd[-1] + fwd * (t - tn[-1])), out)
        return float(out) if out.ndim == 0 else out

    def to_dict(self) -> dict:
        if self.rate is not None:
            return {"rate": self.rate}
        return {"tenors": list(self.tenors), "discounts": list(self.discounts)}


@dataclass(frozen=True)
class ModelParams:
    """Market state of the three-factor model (vols per year, correlations, curves)."""

    s0: float
    sigma_s: float
    sigma_d: float
    sigma_f: float
    rho_sd: float = 0.0
    rho_sf: float = 0.0
    rho_df: float = 0.0
    curve_d: InitialCurve = field(default_factory=lambda: InitialCurve.flat(0.0))
    curve_f: InitialCurve = field(default_factory=lambda: InitialCurve.flat(0.0))

    def __post_init__(self):
        if not self.s0 > 0:
            raise ModelError("spot s0 must be positive")
        for name in ("sigma_s", "sigma_d", "sigma_f"):
            if not getattr(self, name) >= 0:
                raise ModelError(f"{name} must be non-negative")
        for name in ("rho_sd", "rho_sf", "rho_df"):
            if not -1.0 <= getattr(self, name) <= 1.0:
                raise ModelError(f"{name} must lie in [-1, 1]")
        eig = np.linalg.eigvalsh(self.brownian_corr())
        if eig[0] < -PSD_TOL:
            raise ModelError(f"correlation matrix is not positive semidefinite (min eigenvalue {eig[0]:.3e})")

    def brownian_corr(self) -> np.ndarray:
        """Correlation matrix of (W^S, W^f, W^d)."""
        return np.array([
            [1.0, self.rho_sf, self.rho_sd],
            [self.rho_sf, 1.0, self.rho_df],
            [self.rho_sd, self.rho_df, 1.0],
        ])

    @property
    def blocks_independent(self) -> bool:
        """True when (X, W^f) and (Y, W^d) are independent processes."""
        return self.rho_sd == 0.0 and self.rho_df == 0.0

    def with_(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


def _kernels(p: ModelParams):
    """Integrand of each state coordinate as {driver: {power of (t_end - s): coefficient}}."""
    return (
        {_S: {0: p.sigma_s}, _F: {1: p.sigma_f}},  # X
        {_F: {0: 1.0}},                            # W^f
        {_D: {1: -p.sigma_d}},                     # Y
        {_D: {0: 1.0}},                            # W^d
    )


def _horizon_cov(p: ModelParams, h: float) -> np.ndarray:
    """Covariance of the four stochastic integrals over a window of length h (Ito isometry)."""
    if h < 0:
        raise ModelError("negative horizon")
    corr = p.brownian_corr()
    ker = _kernels(p)
    cov = np.zeros((4, 4))
    for a in range(4):
        for b in range(a, 4):
            acc = 0.0
            for da, ca in ker[a].items():
                for db, cb in ker[b].items():
                    c = corr[da, db]
                    if c == 0.0:
                        continue
                    for ma, va in ca.items():
                        for mb, vb in cb.items():
                            n = ma + mb + 1
                            acc += c * va * vb * h ** n / n
            cov[a, b] = cov[b, a] = acc
    return cov


def _check_psd(cov: np.ndarray, what: str) -> None:
    eig = np.linalg.eigvalsh(cov)
    scale = max(1.0, float(np.max(np.abs(np.diag(cov)))))
    if eig[0] < -PSD_TOL * scale:
        raise ModelError(f"{what} is not positive semidefinite (min eigenvalue {eig[0]:.3e})")


def state_cov(p: ModelParams, t: float) -> np.ndarray:
    """4x4 covariance of (X_t, W^f_t, Y_t, W^d_t)."""
    cov = _horizon_cov(p, float(t))
    _check_psd(cov, "state covariance")
    return cov


def increment_cov(p: ModelParams, t_k: float, t_k1: float) -> np.ndarray:
    """4x4 covariance of the increments (G1, G2, G3, G4) over [t_k, t_k1].

    The increments are Ito integrals of the same polynomial kernels over a window of
    length ``t_k1 - t_k``, so only the step length matters.
    """
    if not 0 <= t_k < t_k1:
        raise ModelError("increment_cov needs 0 <= t_k < t_k1")
    cov = _horizon_cov(p, t_k1 - t_k)
    _check_psd(cov, "increment covariance")
    return cov


def transport_matrix(p: ModelParams, delta: float) -> np.ndarray:
    """Linear map of the recursion: state_{k+1} = M state_k + G."""
    m = np.eye(4)
    m[0, 1] = p.sigma_f * delta
    m[2, 3] = -p.sigma_d * delta
    return m


def phi_d(p: ModelParams, t):
    t = np.asarray(t, dtype=float)
    out = p.curve_d(t) * np.exp(-p.sigma_d ** 2 * t ** 3 / 6.0)
    return float(out) if np.ndim(out) == 0 else out


def phi_f(p: ModelParams, t):
    t = np.asarray(t, dtype=float)
    expo = -p.rho_sf * p.sigma_s * p.sigma_f * t ** 2 / 2.0 - p.sigma_f ** 2 * t ** 3 / 6.0
    out = p.curve_f(t) * np.exp(expo)
    return float(out) if np.ndim(out) == 0 else out


def spot_from_state(p: ModelParams, t: float, x, y, discount=None):
    """FX spot at time t from the state values.

    ``discount`` is the realised domestic discount exp(-int_0^t r^d); by default the
    model-implied value phi_d(t) e^{-y} is used, which gives
    S = S_0 phi_f(t) / phi_d(t) exp(-sigma_S^2 t / 2 + x + y).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if discount is None:
        discount = phi_d(p, t) * np.exp(-y)
    discount = np.asarray(discount, dtype=float)
    if np.any(discount <= 0):
        raise ModelError("discount must be positive")
    out = p.s0 * phi_f(p, t) / discount * np.exp(-0.5 * p.sigma_s ** 2 * t + x)
    return float(out) if np.ndim(out) == 0 else out


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root L (L L^T = cov) with small negative eigenvalues clamped to 0."""
    w, v = np.linalg.eigh(cov)
    if w.size and w[0] < -PSD_TOL * max(1.0, float(np.max(np.abs(w)))):
        raise ModelError("covariance is not positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _block_rngs(seed: int, n_paths: int):
    """One generator per fixed-size block of paths, so draws do not depend on batching."""
    n_blocks = -(-n_paths // SIM_BLOCK)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    for b, ss in enumerate(children):
        lo = b * SIM_BLOCK
        yield lo, min(n_paths, lo + SIM_BLOCK), np.random.Generator(np.random.PCG64(ss))


def simulate_states(p: ModelParams, dates, n_paths: int, seed: int) -> np.ndarray:
    """Exact samples of (X, W^f, Y, W^d) at each date; shape (n_paths, n_dates, 4)."""
    dates = np.asarray(dates, dtype=float)
    if dates.ndim != 1 or dates.size == 0:
        raise ModelError("dates must be a non-empty 1-D sequence")
    if dates[0] < 0 or np.any(np.diff(dates) <= 0):
        raise ModelError("dates must be non-negative and strictly increasing")
    if n_paths < 1:
        raise ModelError("n_paths must be >= 1")
    grid = np.concatenate(([0.0], dates)) if dates[0] > 0 else dates
    steps = [
        (transport_matrix(p, b - a), psd_sqrt(_horizon_cov(p, b - a)))
        for a, b in zip(grid[:-1], grid[1:])
    ]
    out = np.empty((n_paths, dates.size, 4))
    offset = grid.size - dates.size  # 1 when an origin step was prepended
    for lo, hi, rng in _block_rngs(seed, n_paths):
        state = np.zeros((hi - lo, 4))
        if offset == 0:
            out[lo:hi, 0] = state
        for k, (m, root) in enumerate(steps):
            z = rng.standard_normal((hi - lo, 4))
            state = state @ m.T + z @ root.T
            out[lo:hi, k + 1 - offset] = state
    return out


def sample_state(p: ModelParams, t: float, n_paths: int, seed: int, *, antithetic: bool = False) -> np.ndarray:
    """Exact samples of the state at a single date t, shape (n_paths, 4).

    With ``antithetic`` the second half of the paths mirrors the first half.
    """
    root = psd_sqrt(state_cov(p, t))
    if not antithetic:
        out = np.empty((n_paths, 4))
        for lo, hi, rng in _block_rngs(seed, n_paths):
            out[lo:hi] = rng.standard_normal((hi - lo, 4)) @ root.T
        return out
    if n_paths % 2:
        raise ModelError("antithetic sampling needs an even number of paths")
    half = sample_state(p, t, n_paths // 2, seed)
    return np.concatenate((half, -half))
