"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the compiled
extension is unavailable (or ``QPRDC_PURE_PYTHON=1`` is set).
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr

# Beyond this many standard deviations the normal tail is below double precision.
MC_CHUNK = 8192
TAIL_CLIP = 38.5

_TWO_PI = 2.0 * np.pi
_GL = {n: np.polynomial.legendre.leggauss(n) for n in (6, 12, 20)}


def _bvnu(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """Upper orthant probability P(U > h, V > k) for a standard pair with correlation r.

    Genz's adaptation of Drezner & Wesolowsky (1990). ``h`` and ``k`` must be finite
    (clip them to +-TAIL_CLIP first) and broadcast against each other.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    ar = abs(r)
    if ar < 0.3:
        x, w = _GL[6]
    elif ar < 0.75:
        x, w = _GL[12]
    else:
        x, w = _GL[20]
    if r == 0.0:
        return ndtr(-h) * ndtr(-k)

    if ar < 0.925:
        hk = h * k
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * np.arcsin(r)
        sn = np.sin(asr * (1.0 + x))
        # (..., nodes) summation in a fixed order
        expo = (sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn)
        bvn = np.exp(expo) @ w
        return bvn * asr / _TWO_PI + ndtr(-h) * ndtr(-k)

    if r < 0:
        k = -k
    hk = h * k
    bvn = np.zeros(h.shape)
    if ar < 1.0:
        as_ = (1.0 - r) * (1.0 + r)
        a = np.sqrt(as_)
        bs = (h - k) ** 2
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 16.0
        asr0 = -0.5 * (bs / as_ + hk)
        term = a * np.exp(np.maximum(asr0, -700.0)) * (
            1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0
        )
        bvn = np.where(asr0 > -100.0, term, 0.0)
        b = np.sqrt(bs)
        sp = np.sqrt(_TWO_PI) * ndtr(-b / a)
        corr = np.exp(np.minimum(-0.5 * hk, 700.0)) * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0)
        bvn = bvn - np.where(hk > -100.0, corr, 0.0)

        a2 = 0.5 * a
        xs = (a2 * (1.0 + x)) ** 2  # nodes
        asr = -0.5 * (bs[..., None] / xs + hk[..., None])
        sp2 = 1.0 + c[..., None] * xs * (1.0 + d[..., None] * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-(hk[..., None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
        vals = np.where(asr > -100.0, np.exp(np.maximum(asr, -700.0)) * (sp2 - ep), 0.0)
        bvn = (a2 * (vals @ w) - bvn) / _TWO_PI

    if r > 0:
        return bvn + ndtr(-np.maximum(h, k))
    lower = np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
    return np.where(h >= k, -bvn, lower - bvn)


def bvn_cdf(u, v, rho: float) -> np.ndarray:
    """Vectorised F(u, v) = P(U <= u, V <= v) for correlation ``rho``."""
    u = np.clip(np.asarray(u, dtype=float), -TAIL_CLIP, TAIL_CLIP)
    v = np.clip(np.asarray(v, dtype=float), -TAIL_CLIP, TAIL_CLIP)
    if rho >= 1.0:
        return ndtr(np.minimum(u, v))
    if rho <= -1.0:
        return np.maximum(ndtr(u) - ndtr(-v), 0.0)
    return np.clip(_bvnu(-u, -v, float(rho)), 0.0, 1.0)


def rect_probs(mean_x, mean_y, edges_x, edges_y, sx: float, sy: float, rho: float,
               threads: int = 0) -> np.ndarray:
    """Cell probabilities of N((mx, my), [[sx^2, rho sx sy], [., sy^2]]) on an edge grid.

    Returns an array of shape (n_src, len(edges_x) - 1, len(edges_y) - 1).
    ``threads`` is accepted for signature parity with the compiled kernel.
    """
    mean_x = np.asarray(mean_x, dtype=float)
    mean_y = np.asarray(mean_y, dtype=float)
    edges_x = np.asarray(edges_x, dtype=float)
    edges_y = np.asarray(edges_y, dtype=float)
    n_src = mean_x.shape[0]
    nx, ny = edges_x.size - 1, edges_y.size - 1
    out = np.empty((n_src, nx, ny))
    chunk = max(1, 2_000_000 // ((nx + 1) * (ny + 1)))
    for s0 in range(0, n_src, chunk):
        s1 = min(n_src, s0 + chunk)
        u = (edges_x[None, :] - mean_x[s0:s1, None]) / sx
        v = (edges_y[None, :] - mean_y[s0:s1, None]) / sy
        f = bvn_cdf(u[:, :, None], v[:, None, :], rho)
        p = f[:, 1:, 1:] - f[:, :-1, 1:] - f[:, 1:, :-1] + f[:, :-1, :-1]
        np.maximum(p, 0.0, out=p)
        out[s0:s1] = p
    return out


def _mc_layout(base, increments, mids):
    """Shared set-up for the cell-counting kernels.

    Returns the arrays as float64, the per-dimension strides of the flattened product
    grid, the destination count and, per dimension, the distinct base values together
    with each source's index into them.
    """
    base = np.ascontiguousarray(base, dtype=float)
    increments = np.ascontiguousarray(increments, dtype=float)
    sizes = [m.size + 1 for m in mids]
    strides = [1] * len(sizes)
    for d in range(len(sizes) - 2, -1, -1):
        strides[d] = strides[d + 1] * sizes[d + 1]
    uniq = [np.unique(base[:, d], return_inverse=True) for d in range(len(mids))]
    return base, increments, strides, int(np.prod(sizes)), uniq


def _mc_chunk(uniq) -> int:
    # keep each per-dimension lookup table around 16 MB of int32
    widest = max(u.size for u, _ in uniq)
    return int(min(MC_CHUNK, max(256, (1 << 22) // widest)))


def _cell_tables(uniq, increments, mids, strides, c0: int, c1: int) -> list[np.ndarray]:
    """Strided cell index of every (distinct base value, sample) pair, per dimension.

    Sources sharing a base coordinate share the table row, so the binary searches run
    once per distinct value instead of once per source.
    """
    return [
        (np.searchsorted(m, u[:, None] + increments[None, c0:c1, d], side="left") * st).astype(np.int32)
        for d, (m, (u, _), st) in enumerate(zip(mids, uniq, strides))
    ]


def mc_counts(base, increments, mids, threads: int = 0) -> np.ndarray:
    """Count arrivals of ``base[s] + increments[m]`` in a product grid of Voronoi cells.

    ``mids`` holds, per dimension, the interior cell boundaries (ascending); cells are
    left-open, right-closed. Returns int64 counts of shape (n_src, prod(len(m) + 1)).
    """
    base, increments, strides, n_dst, uniq = _mc_layout(base, increments, mids)
    out = np.zeros((base.shape[0], n_dst), dtype=np.int64)
    chunk = _mc_chunk(uniq)
    for c0 in range(0, increments.shape[0], chunk):
        c1 = min(increments.shape[0], c0 + chunk)
        tables = _cell_tables(uniq, increments, mids, strides, c0, c1)
        for s in range(base.shape[0]):
            flat = tables[0][uniq[0][1][s]].astype(np.int64)
            for d in range(1, len(tables)):
                flat += tables[d][uniq[d][1][s]]
            out[s] += np.bincount(flat, minlength=n_dst)
    return out
