"""Monte-Carlo oracle: exact-simulation European prices and empirical transition rows."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ModelParams, increment_cov, psd_sqrt, sample_state, transport_matrix
from .payoff import ProductSpec, obstacle_h
from .tree import Mode, QuantTree, _z_cov_2d


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    n_paths: int
    seed: int

    def z_score(self, reference: float) -> float:
        return (self.value - reference) / self.stderr if self.stderr > 0 else math.inf

    def agrees(self, reference: float, n_sigma: float = 4.0) -> bool:
        return abs(self.value - reference) <= n_sigma * self.stderr


def _mean_stderr(samples: np.ndarray) -> tuple[float, float]:
    n = samples.size
    # pairwise summation (numpy's default for contiguous float arrays)
    mean = float(np.sum(samples) / n)
    var = float(np.sum((samples - mean) ** 2) / (n - 1))
    return mean, math.sqrt(var / n)


def mc_european(params: ModelParams, spec: ProductSpec, n_paths: int, seed: int, *,
                antithetic: bool = True) -> McEstimate:
    """Mean of h_T(X_T, Y_T) over exact Gaussian draws of the state at the single date T.

    With ``antithetic`` the n_paths draws come in mirrored pairs and the standard error
    is computed from the pair averages.
    """
    if spec.n_dates != 1:
        raise ValueError("mc_european prices a single-date product")
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    t = float(spec.exercise_dates[0])
    if antithetic:
        half = n_paths // 2
        z = sample_state(params, t, half, seed)
        h_plus = obstacle_h(params, spec, 1, z[:, 0], z[:, 2])
        h_minus = obstacle_h(params, spec, 1, -z[:, 0], -z[:, 2])
        mean, se = _mean_stderr(0.5 * (h_plus + h_minus))
        return McEstimate(mean, se, 2 * half, seed)
    z = sample_state(params, t, n_paths, seed)
    mean, se = _mean_stderr(np.asarray(obstacle_h(params, spec, 1, z[:, 0], z[:, 2])))
    return McEstimate(mean, se, n_paths, seed)


def mc_transition_row(params: ModelParams, tree: QuantTree, k: int, source: int,
                      n_samples: int, seed: int) -> np.ndarray:
    """Empirical arrival frequencies in layer k+1 started from node ``source`` of layer k.

    For 2D trees the increment is the pair (Z1, Z2) used by the deterministic
    transitions; for 4D trees it is the exact increment pushed through the recursion.
    """
    src, dst = tree.layers[k], tree.layers[k + 1]
    if not 0 <= source < src.size:
        raise IndexError(f"source node {source} out of range for layer {k}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k, source))))
    point = np.array([[src.coords(n)[source] for n in src.names]])
    if tree.mode is Mode.TWO_D:
        cov = _z_cov_2d(params, src.t, dst.t)
        base = point
    else:
        cov = increment_cov(params, src.t, dst.t)
        base = point @ transport_matrix(params, dst.t - src.t).T
    incr = rng.standard_normal((n_samples, cov.shape[0])) @ psd_sqrt(cov).T
    counts = kernels.mc_counts(base, incr, [g.midpoints for g in dst.grids], kernels.get_threads())
    return counts[0] / float(n_samples)
