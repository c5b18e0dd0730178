"""Product quantization trees for the 2D (X, Y) and 4D (X, W^f, Y, W^d) pricers.

Each date carries a product of rescaled optimal 1D grids. Transition probabilities
condition on the exact source point (rather than on its whole Voronoi cell) and are
probabilities that a Gaussian increment lands in a destination rectangle.

When the two blocks (X[, W^f]) and (Y[, W^d]) are independent, the transition
matrix is the Kronecker product of two much smaller matrices and is stored that way.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .gaussian import interval_mass
from .model import ModelParams, increment_cov, psd_sqrt, state_cov, transport_matrix
from .payoff import ProductSpec
from .quantizer import Grid1D, gaussian_grid

# refuse to materialise dense transition matrices beyond this many entries
MAX_DENSE_ENTRIES = 1 << 28


class Mode(str, Enum):
    TWO_D = "2d"
    FOUR_D = "4d"


DIM_NAMES = {Mode.TWO_D: ("X", "Y"), Mode.FOUR_D: ("X", "Wf", "Y", "Wd")}


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSizes:
    """Per-dimension quantizer levels, ordered as DIM_NAMES[mode]."""

    mode: Mode
    levels: tuple[int, ...]
    requested: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        levels = tuple(int(n) for n in self.levels)
        if len(levels) != len(DIM_NAMES[self.mode]) or min(levels) < 1:
            raise TreeError(f"invalid levels {levels} for mode {self.mode.value}")
        object.__setattr__(self, "levels", levels)

    @property
    def total(self) -> int:
        return int(np.prod(self.levels))

    def as_dict(self) -> dict:
        return dict(zip(DIM_NAMES[self.mode], self.levels))


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def allocate_sizes(n_total: int, mode) -> GridSizes:
    """Split a node budget across dimensions.

    2D uses N^X = 10 N^Y. 4D uses N^X = 4 N^{W^f}, N^{W^f} = 10 N^{W^d}, N^Y = 4 N^{W^d},
    i.e. 1600 m^4 nodes for N^{W^d} = m.
    """
    mode = Mode(mode)
    if n_total < 1:
        raise TreeError("N_total must be >= 1")
    if mode is Mode.TWO_D:
        ny = max(1, _round_half_up(math.sqrt(n_total / 10.0)))
        nx = max(1, _round_half_up(n_total / ny))
        return GridSizes(mode, (nx, ny), n_total)
    m = max(1, _round_half_up((n_total / 1600.0) ** 0.25))
    return GridSizes(mode, (40 * m, 10 * m, 4 * m, m), n_total)


@dataclass(frozen=True)
class DateLayer:
    """Product grid at one date; nodes are flattened in C order over the dimensions."""

    t: float
    grids: tuple[Grid1D, ...]
    names: tuple[str, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.level for g in self.grids)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def grid(self, name: str) -> Grid1D:
        return self.grids[self.names.index(name)]

    def coords(self, name: str) -> np.ndarray:
        """Coordinate ``name`` of every node, in flat node order."""
        d = self.names.index(name)
        shape = [1] * len(self.grids)
        shape[d] = self.grids[d].level
        return np.broadcast_to(self.grids[d].points.reshape(shape), self.shape).ravel()

    def node_weights(self) -> np.ndarray:
        """Product of the 1D cell weights (the marginal-product cubature weights)."""
        w = self.grids[0].weights
        for g in self.grids[1:]:
            w = np.multiply.outer(w, g.weights)
        return np.asarray(w).ravel()

    def unravel(self, flat) -> tuple[np.ndarray, ...]:
        return np.unravel_index(flat, self.shape)


@dataclass
class TransitionMatrix:
    """pi[i][j] from layer k to layer k+1, dense or as a Kronecker pair (A, B)."""

    step: int
    provenance: str
    dense: Optional[np.ndarray] = None
    factors: Optional[tuple[np.ndarray, np.ndarray]] = None
    n_samples: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if (self.dense is None) == (self.factors is None):
            raise TreeError("give exactly one of dense or factors")

    @property
    def shape(self) -> tuple[int, int]:
        if self.dense is not None:
            return self.dense.shape
        a, b = self.factors
        return a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]

    @property
    def is_monte_carlo(self) -> bool:
        return self.n_samples is not None

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Conditional expectation sum_j pi[i][j] v[j] for every source node i."""
        v = np.asarray(v, dtype=float)
        if self.dense is not None:
            return self.dense @ v
        a, b = self.factors
        return (a @ v.reshape(a.shape[1], b.shape[1]) @ b.T).ravel()

    def row(self, i: int) -> np.ndarray:
        if self.dense is not None:
            return self.dense[i].copy()
        a, b = self.factors
        ia, ib = divmod(int(i), b.shape[0])
        return np.outer(a[ia], b[ib]).ravel()

    def to_dense(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense
        n_src, n_dst = self.shape
        if n_src * n_dst > MAX_DENSE_ENTRIES:
            raise MemoryError(f"dense {n_src}x{n_dst} transition matrix is too large")
        return np.kron(*self.factors)

    def row_sums(self) -> np.ndarray:
        if self.dense is not None:
            return self.dense.sum(axis=1)
        a, b = self.factors
        return np.outer(a.sum(axis=1), b.sum(axis=1)).ravel()

    def row_tolerance(self) -> float:
        return 3.0 / math.sqrt(self.n_samples) if self.is_monte_carlo else 1e-8


@dataclass(frozen=True)
class McConfig:
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise TreeError("n_samples must be >= 1")


@dataclass
class QuantTree:
    """Layers k = 0..n (layer 0 is the origin) and transitions k = 0..n-1."""

    mode: Mode
    params: ModelParams
    sizes: GridSizes
    layers: list[DateLayer]
    transitions: list[Optional[TransitionMatrix]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def dates(self) -> np.ndarray:
        return np.array([layer.t for layer in self.layers])

    @property
    def n_steps(self) -> int:
        return len(self.layers) - 1


# -- building blocks ----------------------------------------------------------

def _interval_probs(means: np.ndarray, grid: Grid1D, sd: float) -> np.ndarray:
    """P(m + sd Z in cell_j) for each mean m, shape (len(means), grid.level)."""
    means = np.asarray(means, dtype=float)
    if sd == 0.0:
        out = np.zeros((means.size, grid.level))
        out[np.arange(means.size), grid.cell_of(means)] = 1.0
        return out
    e = (grid.edges[None, :] - means[:, None]) / sd
    return interval_mass(e[:, :-1], e[:, 1:])


def _pair_probs(mx, my, gx: Grid1D, gy: Grid1D, cov2: np.ndarray) -> np.ndarray:
    """P((mx, my) + N(0, cov2) in cell (jx, jy)), shape (n_src, gx.level * gy.level)."""
    mx = np.asarray(mx, dtype=float)
    my = np.asarray(my, dtype=float)
    sx, sy = math.sqrt(max(cov2[0, 0], 0.0)), math.sqrt(max(cov2[1, 1], 0.0))
    n = mx.size
    if sx == 0.0 or sy == 0.0:
        px = _interval_probs(mx, gx, sx)
        py = _interval_probs(my, gy, sy)
        return (px[:, :, None] * py[:, None, :]).reshape(n, -1)
    rho = float(np.clip(cov2[0, 1] / (sx * sy), -1.0, 1.0))
    if rho == 0.0:
        px = _interval_probs(mx, gx, sx)
        py = _interval_probs(my, gy, sy)
        return (px[:, :, None] * py[:, None, :]).reshape(n, -1)
    out = kernels.rect_probs(mx, my, gx.edges, gy.edges, sx, sy, rho, kernels.get_threads())
    return out.reshape(n, -1)


def _check_dense_budget(n_src: int, n_dst: int) -> None:
    if n_src * n_dst > MAX_DENSE_ENTRIES:
        raise MemoryError(
            f"a dense {n_src}x{n_dst} transition matrix exceeds the memory budget; "
            "use smaller grids or independent blocks"
        )


def _z_cov_2d(p: ModelParams, t_k: float, t_k1: float) -> np.ndarray:
    """Covariance of (sigma_f delta W^f_{t_k} + G1, -sigma_d delta W^d_{t_k} + G3)."""
    delta = t_k1 - t_k
    g = increment_cov(p, t_k, t_k1)
    c = np.empty((2, 2))
    c[0, 0] = p.sigma_f ** 2 * delta ** 2 * t_k + g[0, 0]
    c[1, 1] = p.sigma_d ** 2 * delta ** 2 * t_k + g[2, 2]
    c[0, 1] = c[1, 0] = -p.sigma_f * p.sigma_d * delta ** 2 * p.rho_df * t_k + g[0, 2]
    return c


_GL3_U, _GL3_W = np.polynomial.legendre.leggauss(3)
_GL3_U = 0.5 * (_GL3_U + 1.0)
_GL3_W = 0.5 * _GL3_W


def _cell_nodes(grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
    """Three Gauss-Legendre nodes per Voronoi cell in probability space.

    Returns (nodes, weights) of shape (level, 3): nodes sample the conditional law of
    the grid's Gaussian within each cell, weights sum to 1 per cell.
    """
    if grid.sigma == 0.0:
        return np.full((1, 3), grid.mu), np.tile(_GL3_W, (1, 1))
    e = (grid.edges - grid.mu) / grid.sigma
    a, b = e[:-1], e[1:]
    mass = interval_mass(a, b)[:, None]
    upper = (a > 0)[:, None]
    # lower-tail coordinates for cells below zero, mirrored upper-tail ones above it
    lo = np.where(upper, ndtr(-b)[:, None], ndtr(a)[:, None])
    u = np.where(upper, lo + mass * (1.0 - _GL3_U[None, :]), lo + mass * _GL3_U[None, :])
    z = ndtri(u)
    z = np.where(upper, -z, z)
    return grid.mu + grid.sigma * z, np.tile(_GL3_W, (grid.level, 1))


def transitions_2d(tree: QuantTree, k: int, *, cell_average: bool = False,
                   force_bivariate: bool = False) -> TransitionMatrix:
    """Transition from layer k to k+1 of a 2D tree.

    The increments Z1 = sigma_f delta W^f_{t_k} + G1 and Z2 = -sigma_d delta W^d_{t_k} + G3
    are taken jointly Gaussian and independent of the source point. With
    ``cell_average`` the source point is replaced by a 3x3 Gauss-Legendre average over
    its Voronoi cell (validation only).
    """
    if tree.mode is not Mode.TWO_D:
        raise TreeError("transitions_2d needs a 2D tree")
    src, dst = tree.layers[k], tree.layers[k + 1]
    c = _z_cov_2d(tree.params, src.t, dst.t)
    gx_s, gy_s = src.grids
    gx_d, gy_d = dst.grids
    sx, sy = math.sqrt(max(c[0, 0], 0.0)), math.sqrt(max(c[1, 1], 0.0))

    if cell_average:
        nx, wx = _cell_nodes(gx_s)
        ny, wy = _cell_nodes(gy_s)
    else:
        nx, wx = gx_s.points[:, None], np.ones((gx_s.level, 1))
        ny, wy = gy_s.points[:, None], np.ones((gy_s.level, 1))

    if c[0, 1] == 0.0 and not force_bivariate:
        a = np.einsum("iq,iqj->ij", wx, _interval_probs(nx.ravel(), gx_d, sx).reshape(*nx.shape, -1))
        b = np.einsum("iq,iqj->ij", wy, _interval_probs(ny.ravel(), gy_d, sy).reshape(*ny.shape, -1))
        prov = "cell-averaged-factorized-2d" if cell_average else "deterministic-factorized-2d"
        return TransitionMatrix(k, prov, factors=(a, b))

    _check_dense_budget(src.size, dst.size)
    pi = np.zeros((src.size, dst.size))
    for q in range(nx.shape[1]):
        for r in range(ny.shape[1]):
            mx = np.repeat(nx[:, q], gy_s.level)
            my = np.tile(ny[:, r], gx_s.level)
            w = np.repeat(wx[:, q], gy_s.level) * np.tile(wy[:, r], gx_s.level)
            pi += w[:, None] * _pair_probs(mx, my, gx_d, gy_d, c)
    prov = "cell-averaged-2d" if cell_average else "deterministic-2d"
    return TransitionMatrix(k, prov, dense=pi)


def _pair_sources(layer: DateLayer, a: str, b: str):
    ga, gb = layer.grid(a), layer.grid(b)
    return np.repeat(ga.points, gb.level), np.tile(gb.points, ga.level)


def transitions_4d(tree: QuantTree, k: int, mc: Optional[McConfig] = None, *,
                   force_mc: bool = False) -> TransitionMatrix:
    """Transition from layer k to k+1 of a 4D tree.

    Independent blocks give the exact Kronecker pair of (X, W^f) and (Y, W^d)
    rectangle probabilities. Otherwise the matrix is estimated by Monte Carlo with one
    batch of increments shared by all source nodes.
    """
    if tree.mode is not Mode.FOUR_D:
        raise TreeError("transitions_4d needs a 4D tree")
    p = tree.params
    src, dst = tree.layers[k], tree.layers[k + 1]
    delta = dst.t - src.t
    g = increment_cov(p, src.t, dst.t)

    if p.blocks_independent and not force_mc:
        x, u = _pair_sources(src, "X", "Wf")
        a = _pair_probs(x + p.sigma_f * delta * u, u, dst.grid("X"), dst.grid("Wf"), g[np.ix_([0, 1], [0, 1])])
        y, v = _pair_sources(src, "Y", "Wd")
        b = _pair_probs(y - p.sigma_d * delta * v, v, dst.grid("Y"), dst.grid("Wd"), g[np.ix_([2, 3], [2, 3])])
        return TransitionMatrix(k, "deterministic-factorized-4d", factors=(a, b))

    if mc is None:
        raise TreeError("correlated 4D transitions need Monte-Carlo settings (mc_samples)")
    _check_dense_budget(src.size, dst.size)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(mc.seed, spawn_key=(k,))))
    incr = rng.standard_normal((mc.n_samples, 4)) @ psd_sqrt(g).T
    base = np.stack([src.coords(n) for n in src.names], axis=1) @ transport_matrix(p, delta).T
    mids = [gr.midpoints for gr in dst.grids]
    counts = kernels.mc_counts(base, incr, mids, kernels.get_threads())
    return TransitionMatrix(k, "monte-carlo-4d", dense=counts / float(mc.n_samples),
                            n_samples=mc.n_samples, seed=mc.seed)


# -- assembly -----------------------------------------------------------------

def _layer(p: ModelParams, t: float, sizes: GridSizes, cache: bool, cache_dir) -> DateLayer:
    names = DIM_NAMES[sizes.mode]
    cov = state_cov(p, t)
    var = {"X": cov[0, 0], "Wf": cov[1, 1], "Y": cov[2, 2], "Wd": cov[3, 3]}
    grids = tuple(
        gaussian_grid(n, var[name], cache=cache, cache_dir=cache_dir)
        for name, n in zip(names, sizes.levels)
    )
    return DateLayer(t, grids, names)


def build_tree(params: ModelParams, spec: ProductSpec | Sequence[float], sizes: GridSizes, *,
               mc: Optional[McConfig] = None, with_transitions: bool = True,
               cell_average: bool = False, cache: bool = True, cache_dir=None) -> QuantTree:
    """Quantization tree on {0} plus the exercise dates of ``spec``."""
    dates = spec.exercise_dates if isinstance(spec, ProductSpec) else np.asarray(spec, dtype=float)
    dates = np.atleast_1d(np.asarray(dates, dtype=float))
    if dates[0] <= 0 or np.any(np.diff(dates) <= 0):
        raise TreeError("tree dates must be positive and strictly increasing")
    names = DIM_NAMES[sizes.mode]
    t0 = time.perf_counter()
    root = DateLayer(0.0, tuple(Grid1D.point_mass(0.0) for _ in names), names)
    layers = [root] + [_layer(params, float(t), sizes, cache, cache_dir) for t in dates]
    tree = QuantTree(sizes.mode, params, sizes, layers, [None] * len(dates))
    tree.meta["grid_ms"] = 1e3 * (time.perf_counter() - t0)
    t1 = time.perf_counter()
    if with_transitions:
        for k in range(tree.n_steps):
            tree.transitions[k] = compute_transition(tree, k, mc=mc, cell_average=cell_average)
    tree.meta["transition_ms"] = 1e3 * (time.perf_counter() - t1)
    return tree


def compute_transition(tree: QuantTree, k: int, *, mc: Optional[McConfig] = None,
                       cell_average: bool = False) -> TransitionMatrix:
    if tree.mode is Mode.TWO_D:
        return transitions_2d(tree, k, cell_average=cell_average)
    if cell_average:
        raise TreeError("cell averaging is only available for 2D trees")
    return transitions_4d(tree, k, mc)


def dump_tree(tree: QuantTree, out_dir) -> list[Path]:
    """Write layer_<k>.csv (node, coordinates, weight) and step_<k>.csv (i, j, pi) files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for k, layer in enumerate(tree.layers):
        path = out / f"layer_{k}.csv"
        coords = [layer.coords(n) for n in layer.names]
        weights = layer.node_weights()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", *layer.names, "weight"])
            for i in range(layer.size):
                w.writerow([i, *(f"{c[i]:.17g}" for c in coords), f"{weights[i]:.17g}"])
        written.append(path)
    for k, tm in enumerate(tree.transitions):
        if tm is None:
            continue
        path = out / f"step_{k}.csv"
        dense = tm.to_dense()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "pi"])
            for i in range(dense.shape[0]):
                for j in np.nonzero(dense[i])[0]:
                    w.writerow([i, j, f"{dense[i, j]:.17g}"])
        written.append(path)
    return written
