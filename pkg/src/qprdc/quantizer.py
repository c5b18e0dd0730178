"""Optimal quadratic quantizers of one-dimensional Gaussian laws.

Standard-normal grids are built once (Lloyd fixed point followed by Newton polishing),
cached on disk, and mapped to N(mu, sigma^2) by the affine rescaling z -> mu + sigma z,
which preserves optimality.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, solveh_banded
from scipy.special import ndtr

from .gaussian import gauss_cell_moments, interval_mass, norm_inv_cdf, norm_pdf

log = logging.getLogger(__name__)

LLOYD_TOL = 1e-8
NEWTON_TOL = 1e-12
STATIONARITY_TOL = 1e-10
MAX_LLOYD = 10_000
MAX_NEWTON = 100
# Lloyd sweeps run before Newton is allowed to take over
LLOYD_WARMUP = 25
# relative rounding noise of the closed-form distortion sum
DIST_NOISE = 1e-11

HEADER_PREFIX = "QGRID1D v1 N="


class QuantizerConvergenceError(RuntimeError):
    pass


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    """An N-point quantizer of N(mu, sigma^2) with its Voronoi weights and distortion."""

    points: np.ndarray
    weights: np.ndarray
    distortion: float
    mu: float = 0.0
    sigma: float = 1.0
    _mids: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        w = np.array(self.weights, dtype=float)
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.ndim != 1 or pts.size < 1 or w.shape != pts.shape:
            raise ValueError("points and weights must be 1-D arrays of equal, positive length")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("quantizer points must be strictly increasing")
        if self.sigma < 0 or (self.sigma == 0 and pts.size != 1):
            raise ValueError("sigma must be positive (zero only for a one-point grid)")
        mids = 0.5 * (pts[1:] + pts[:-1])
        mids.setflags(write=False)
        object.__setattr__(self, "_mids", mids)

    @property
    def level(self) -> int:
        return int(self.points.size)

    @property
    def midpoints(self) -> np.ndarray:
        """Interior Voronoi boundaries z_{i+1/2}, i = 1..N-1."""
        return self._mids

    @property
    def edges(self) -> np.ndarray:
        """All N+1 cell boundaries, with -inf and +inf at the ends."""
        return np.concatenate(([-np.inf], self._mids, [np.inf]))

    @classmethod
    def point_mass(cls, mu: float = 0.0) -> "Grid1D":
        """One-point grid for a degenerate (zero-variance) law."""
        return cls(points=np.array([mu]), weights=np.array([1.0]), distortion=0.0, mu=mu, sigma=0.0)

    def cell_of(self, values) -> np.ndarray:
        """Index of the Voronoi cell (left-open, right-closed) containing each value."""
        return np.searchsorted(self._mids, values, side="left")


def _edges(z: np.ndarray) -> np.ndarray:
    return np.concatenate(([-np.inf], 0.5 * (z[1:] + z[:-1]), [np.inf]))


def _cell_stats(z: np.ndarray):
    e = _edges(z)
    a, b = e[:-1], e[1:]
    mass = interval_mass(a, b)
    pa, pb = norm_pdf(a), norm_pdf(b)
    first = pa - pb
    return e, mass, first, pa, pb


def std_distortion(z: np.ndarray) -> float:
    """E[min_i (Z - z_i)^2] for Z ~ N(0, 1), summed cell by cell in closed form."""
    z = np.asarray(z, dtype=float)
    e, mass, first, pa, pb = _cell_stats(z)
    a, b = e[:-1], e[1:]
    with np.errstate(invalid="ignore"):
        apa = np.where(np.isinf(a), 0.0, a * pa)
        bpb = np.where(np.isinf(b), 0.0, b * pb)
    second = mass + apa - bpb
    cells = second - 2.0 * z * first + z * z * mass
    return float(np.sum(np.maximum(cells, 0.0)))


def _lloyd_step(z: np.ndarray) -> np.ndarray:
    e = _edges(z)
    _, centroid = gauss_cell_moments(e[:-1], e[1:], strict=False)
    return np.where(np.isnan(centroid), z, centroid)


def _newton_step(z: np.ndarray):
    """Newton direction on the half-gradient g_i = z_i p_i - m_i with tridiagonal Hessian."""
    e, mass, first, pa, pb = _cell_stats(z)
    g = z * mass - first
    gaps = np.diff(z)
    phi_mid = pb[:-1]  # density at the interior boundaries
    off = -0.25 * phi_mid * gaps
    diag = mass.copy()
    diag[:-1] += off
    diag[1:] += off
    ab = np.zeros((2, z.size))
    ab[0, 1:] = off
    ab[1] = diag
    return -solveh_banded(ab, g), g, mass, first


def stationarity_gap(z: np.ndarray) -> float:
    """max_i |z_i - E[Z | Z in C_i]| for the standard normal."""
    e = _edges(np.asarray(z, dtype=float))
    _, centroid = gauss_cell_moments(e[:-1], e[1:])
    return float(np.max(np.abs(z - centroid)))


def build_std_grid(n: int, *, debug: bool = False) -> Grid1D:
    """Optimal quadratic n-quantizer of N(0, 1).

    Points start at the mid-quantiles, Lloyd's fixed point iteration brings them
    close to stationarity and a Newton solve on the distortion gradient finishes
    the job. Raises :class:`QuantizerConvergenceError` when the iteration budget
    is exhausted.
    """
    n = int(n)
    if n < 1:
        raise ValueError("quantizer level must be >= 1")
    if n == 1:
        return Grid1D(points=np.array([0.0]), weights=np.array([1.0]), distortion=1.0)

    # mid-quantiles of N(0, 3): the asymptotically optimal point density phi^(1/3)
    z = np.sqrt(3.0) * norm_inv_cdf((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n))
    dist = std_distortion(z)
    n_lloyd = n_newton = 0
    converged = False
    while not converged:
        if n_lloyd >= LLOYD_WARMUP:
            cand = _guarded_newton(z, dist)
            if cand is not None:
                new, new_dist = cand
                move = float(np.max(np.abs(new - z)))
                z, dist = new, new_dist
                n_newton += 1
                converged = move < NEWTON_TOL
                if n_newton >= MAX_NEWTON and not converged:
                    break
                continue
        if n_lloyd >= MAX_LLOYD:
            raise QuantizerConvergenceError(f"Lloyd did not converge in {MAX_LLOYD} sweeps (N={n})")
        new = _lloyd_step(z)
        move = float(np.max(np.abs(new - z)))
        new_dist = std_distortion(new)
        if debug:
            assert new_dist <= dist * (1 + DIST_NOISE), f"Lloyd increased distortion at sweep {n_lloyd}"
        z, dist = new, new_dist
        n_lloyd += 1
        converged = move < LLOYD_TOL and stationarity_gap(z) <= STATIONARITY_TOL

    # exact symmetry of the standard normal quantizer
    z = 0.5 * (z - z[::-1])
    gap = stationarity_gap(z)
    if gap > STATIONARITY_TOL:
        raise QuantizerConvergenceError(f"stationarity gap {gap:.3e} above tolerance (N={n})")
    e = _edges(z)
    log.debug("built N=%d grid: %d Lloyd sweeps, %d Newton steps", n, n_lloyd, n_newton)
    return Grid1D(points=z, weights=interval_mass(e[:-1], e[1:]), distortion=std_distortion(z))


def _guarded_newton(z: np.ndarray, dist: float):
    """One Newton step with backtracking; ``None`` if it cannot decrease the distortion."""
    try:
        step, *_ = _newton_step(z)
    except (LinAlgError, ValueError):
        return None
    t = 1.0
    while t > 1e-4:
        cand = z + t * step
        if np.all(np.diff(cand) > 0):
            d = std_distortion(cand)
            if d <= dist * (1.0 + DIST_NOISE):
                return cand, d
        t *= 0.5
    return None


def rescale(grid: Grid1D, mu: float, sigma: float) -> Grid1D:
    """Map a standard-normal grid onto N(mu, sigma^2)."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if grid.mu != 0.0 or grid.sigma != 1.0:
        raise ValueError("rescale expects a standard-normal grid")
    return Grid1D(
        points=mu + sigma * grid.points,
        weights=grid.weights,
        distortion=sigma * sigma * grid.distortion,
        mu=mu,
        sigma=sigma,
    )


def distortion_of(grid: Grid1D) -> float:
    """Quadratic distortion of ``grid`` under its own Gaussian law, in closed form."""
    if grid.sigma == 0:
        return 0.0
    z = (grid.points - grid.mu) / grid.sigma
    return grid.sigma ** 2 * std_distortion(z)


def recomputed_weights(grid: Grid1D) -> np.ndarray:
    """Cell masses recomputed from the midpoints (for invariant checks)."""
    if grid.sigma == 0:
        return np.ones(1)
    e = (grid.edges - grid.mu) / grid.sigma
    return interval_mass(e[:-1], e[1:])


# -- persistence -------------------------------------------------------------

def save_grid(grid: Grid1D, path) -> None:
    """Write ``grid`` as QGRID1D text, atomically (temp file then rename)."""
    path = Path(path)
    lines = [f"{HEADER_PREFIX}{grid.level}"]
    lines += [f"{p:.17g} {w:.17g}" for p, w in zip(grid.points, grid.weights)]
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write("\n".join(lines) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_grid(path) -> Grid1D:
    """Read a QGRID1D file written by :func:`save_grid` (standard-normal law)."""
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if not rows or not rows[0].startswith(HEADER_PREFIX):
        raise GridFormatError(f"{path}: missing '{HEADER_PREFIX}<N>' header")
    try:
        n = int(rows[0][len(HEADER_PREFIX):])
        data = np.array([[float(t) for t in r.split()] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise GridFormatError(f"{path}: {exc}") from None
    if data.shape != (n, 2):
        raise GridFormatError(f"{path}: header says N={n} but found {len(rows) - 1} rows")
    pts, w = data[:, 0], data[:, 1]
    if np.any(np.diff(pts) <= 0):
        raise GridFormatError(f"{path}: points are not strictly increasing")
    if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
        raise GridFormatError(f"{path}: weights must be positive and sum to 1")
    dist = 1.0 if n == 1 else std_distortion(pts)
    return Grid1D(points=pts, weights=w, distortion=dist)


def default_cache_dir() -> Path:
    env = os.environ.get("QPRDC_CACHE_DIR")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "qprdc"


def grid_path(n: int, cache_dir=None) -> Path:
    return Path(cache_dir or default_cache_dir()) / f"qgrid1d_{int(n)}.txt"


@lru_cache(maxsize=256)
def _memo_grid(n: int, cache_dir: str | None) -> Grid1D:
    if cache_dir is None:
        return build_std_grid(n)
    path = grid_path(n, cache_dir)
    if path.exists():
        try:
            return load_grid(path)
        except GridFormatError:
            log.warning("ignoring corrupt grid cache file %s", path)
    grid = build_std_grid(n)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_grid(grid, path)
    except OSError as exc:  # cache is an optimisation only
        log.warning("could not write grid cache %s: %s", path, exc)
    return grid


def std_grid(n: int, *, cache: bool = True, cache_dir=None) -> Grid1D:
    """Standard-normal optimal grid of level ``n``, from the cache when enabled."""
    if not cache:
        return _memo_grid(int(n), None)
    return _memo_grid(int(n), str(cache_dir or default_cache_dir()))


def gaussian_grid(n: int, variance: float, *, mean: float = 0.0, **kw) -> Grid1D:
    """Optimal grid for N(mean, variance); a zero variance gives a one-point grid."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if variance == 0.0:
        return Grid1D.point_mass(mean)
    return rescale(std_grid(n, **kw), mean, float(np.sqrt(variance)))
