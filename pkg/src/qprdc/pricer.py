"""Backward dynamic programming on a quantization tree, and single-date cubature."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import ModelParams
from .payoff import ProductSpec, obstacle_h
from .tree import QuantTree, TreeError


@dataclass
class PriceResult:
    """Value at the root plus per-layer diagnostics.

    ``values[k]``, ``continuation[k]`` and ``exercise_flags[k]`` are indexed by the tree
    layer (k = 0 is the root) and only kept when the pricer runs with ``retain=True``.
    """

    v0: float
    values: Optional[list[np.ndarray]] = None
    continuation: Optional[list[np.ndarray]] = None
    exercise_flags: Optional[list[np.ndarray]] = None
    layers: Optional[list] = None
    meta: dict = field(default_factory=dict)


def layer_obstacle(tree: QuantTree, params: ModelParams, spec: ProductSpec, k: int) -> np.ndarray:
    """h_k at every node of layer k (k >= 1), in flat node order."""
    layer = tree.layers[k]
    gx, gy = layer.grid("X"), layer.grid("Y")
    h = obstacle_h(params, spec, k, gx.points[:, None], gy.points[None, :])
    h = np.broadcast_to(h, (gx.level, gy.level))
    if len(layer.names) == 2:
        return np.ascontiguousarray(h).ravel()
    # (X, Wf, Y, Wd): h does not depend on the Brownian coordinates
    full = np.broadcast_to(h[:, None, :, None], layer.shape)
    return np.ascontiguousarray(full).ravel()


def _check(tree: QuantTree, spec: ProductSpec) -> None:
    if tree.n_steps != spec.n_dates:
        raise TreeError(f"tree has {tree.n_steps} dates but the product has {spec.n_dates}")
    if not np.allclose(tree.dates[1:], spec.exercise_dates, rtol=0, atol=1e-12):
        raise TreeError("tree dates do not match the exercise dates")
    if any(tm is None for tm in tree.transitions):
        raise TreeError("tree is missing transition matrices")


def price_bermudan(tree: QuantTree, params: ModelParams, spec: ProductSpec, *,
                   retain: bool = True, exercise_at_t0: bool = False) -> PriceResult:
    """Quantized backward induction v_k = max(h_k, sum_j pi[i][j] v_{k+1}[j]).

    Dates flagged non-exercisable in ``spec`` (and t_0 unless ``exercise_at_t0``)
    only propagate the continuation value. Ties between obstacle and continuation
    count as exercise.
    """
    _check(tree, spec)
    start = time.perf_counter()
    n = tree.n_steps
    values: list = [None] * (n + 1)
    cont: list = [None] * (n + 1)
    flags: list = [None] * (n + 1)

    v = layer_obstacle(tree, params, spec, n)
    values[n] = v
    cont[n] = np.zeros_like(v)
    flags[n] = np.ones(v.shape, dtype=bool) if spec.exercisable[n - 1] else np.zeros(v.shape, dtype=bool)
    if not spec.exercisable[n - 1]:
        v = np.zeros_like(v)
        values[n] = v
    for k in range(n - 1, -1, -1):
        c = tree.transitions[k].apply(v)
        cont[k] = c
        can_exercise = exercise_at_t0 if k == 0 else bool(spec.exercisable[k - 1])
        if can_exercise:
            h = layer_obstacle(tree, params, spec, k) if k > 0 else _root_obstacle(params, spec)
            flags[k] = h >= c
            v = np.where(flags[k], h, c)
        else:
            flags[k] = np.zeros(c.shape, dtype=bool)
            v = c
        values[k] = v
        if not retain:
            values[k + 1] = cont[k + 1] = flags[k + 1] = None

    meta = dict(tree.meta)
    meta.update(mode=tree.mode.value, levels=tree.sizes.levels, nodes_per_date=tree.sizes.total,
                induction_ms=1e3 * (time.perf_counter() - start))
    if not retain:
        return PriceResult(float(v[0]), meta=meta)
    return PriceResult(float(v[0]), values, cont, flags, tree.layers, meta)


def _root_obstacle(params: ModelParams, spec: ProductSpec) -> np.ndarray:
    """Exercise value at t_0 = 0, taken as the date-1 coupon on today's spot."""
    return np.array([float(spec.psi(1, params.s0))])


def european_cubature(tree: QuantTree, params: ModelParams, spec: ProductSpec) -> PriceResult:
    """sum_j pi[root][j] h_T(node_j) on a tree with layers {t_0, T}."""
    if tree.n_steps != 1:
        raise TreeError("european_cubature needs a tree with exactly two layers")
    _check(tree, spec)
    start = time.perf_counter()
    h = layer_obstacle(tree, params, spec, 1)
    v0 = float(tree.transitions[0].apply(h)[0])
    meta = dict(tree.meta)
    meta.update(mode=tree.mode.value, levels=tree.sizes.levels, nodes_per_date=tree.sizes.total,
                induction_ms=1e3 * (time.perf_counter() - start))
    return PriceResult(v0, meta=meta)


def exercise_boundary(result: PriceResult, k: int) -> np.ndarray:
    """Coordinates (one row per node) of layer-k nodes where exercising is optimal."""
    if result.exercise_flags is None or result.layers is None:
        raise ValueError("layer retention was disabled for this result")
    layer = result.layers[k]
    idx = np.nonzero(result.exercise_flags[k])[0]
    return np.stack([layer.coords(name)[idx] for name in layer.names], axis=1)
