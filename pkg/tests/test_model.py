import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from helpers import market_params
from qprdc.model import (InitialCurve, ModelError, ModelParams, increment_cov, phi_d, phi_f,
                         simulate_states, spot_from_state, state_cov, transport_matrix)


def symbolic_increment_cov(p: ModelParams, tk: float, tk1: float) -> np.ndarray:
    """Ito isometry over [t_k, t_k1] with the kernels written in calendar time s."""
    s, t0, t1 = sp.symbols("s t0 t1", real=True)
    # integrands per Brownian driver (W^S, W^f, W^d)
    g = [
        {0: sp.Float(p.sigma_s), 1: p.sigma_f * (t1 - s)},
        {1: sp.Integer(1)},
        {2: -p.sigma_d * (t1 - s)},
        {2: sp.Integer(1)},
    ]
    corr = p.brownian_corr()
    out = np.zeros((4, 4))
    for i in range(4):
        for j in range(4):
            expr = 0
            for bi, fi in g[i].items():
                for bj, fj in g[j].items():
                    expr += corr[bi, bj] * sp.integrate(fi * fj, (s, t0, t1))
            out[i, j] = float(sp.N(expr.subs({t0: tk, t1: tk1}), 30))
    return out


def test_phi_examples():
    p = market_params(0.0)
    assert phi_d(p, 3.0) == pytest.approx(math.exp(-0.045), rel=1e-15)
    p = market_params(0.005)
    assert phi_d(p, 0.0) == 1.0 and phi_f(p, 0.0) == 1.0
    assert phi_d(p, 10.0) == pytest.approx(math.exp(-0.15) * math.exp(-0.005 ** 2 * 1000 / 6), rel=1e-14)
    q = market_params(0.05, correlated=True)
    expected = math.exp(-0.05) * math.exp(0.0272 * 0.5 * 0.05 * 25 / 2 - 0.05 ** 2 * 125 / 6)
    assert phi_f(q, 5.0) == pytest.approx(expected, rel=1e-14)


def test_state_cov_examples():
    p = market_params(0.005)
    assert np.array_equal(state_cov(p, 0.0), np.zeros((4, 4)))
    assert state_cov(p, 2.0)[0, 0] == pytest.approx(0.5 + 0.005 ** 2 * 8 / 3, rel=1e-14)
    assert state_cov(p, 10.0)[2, 2] == pytest.approx(0.005 ** 2 * 1000 / 3, rel=1e-14)
    q = market_params(0.05, correlated=True)
    t = 3.0
    var_x = 0.25 * t + q.rho_sf * 0.5 * 0.05 * t ** 2 + 0.05 ** 2 * t ** 3 / 3
    c = state_cov(q, t)
    assert c[0, 0] == pytest.approx(var_x, rel=1e-14)
    assert c[1, 1] == c[3, 3] == pytest.approx(t)


@pytest.mark.parametrize("correlated", [False, True])
@pytest.mark.parametrize("tk,tk1", [(0.0, 1.0), (2.0, 3.0), (4.5, 5.0), (1.0, 10.0)])
def test_increment_cov_matches_symbolic_oracle(correlated, tk, tk1):
    p = market_params(0.05, correlated=correlated)
    assert np.max(np.abs(increment_cov(p, tk, tk1) - symbolic_increment_cov(p, tk, tk1))) <= 1e-13


def test_increment_cov_examples():
    p = market_params(0.05, correlated=True)
    d = 0.7
    c = increment_cov(p, 1.0, 1.0 + d)
    assert c[1, 1] == pytest.approx(d) and c[3, 3] == pytest.approx(d)
    assert c[2, 2] == pytest.approx(0.05 ** 2 * d ** 3 / 3, rel=1e-14)
    assert c[2, 3] == pytest.approx(-0.05 * d ** 2 / 2, rel=1e-14)
    cov13 = -(p.rho_sd * 0.5 * 0.05 * d ** 2 / 2 + p.rho_df * 0.05 * 0.05 * d ** 3 / 3)
    assert c[0, 2] == pytest.approx(cov13, rel=1e-14)
    with pytest.raises(ModelError):
        increment_cov(p, 2.0, 2.0)


@given(st.lists(st.floats(0.01, 3.0), min_size=1, max_size=8), st.booleans())
def test_state_cov_composes_along_partitions(steps, correlated):
    p = market_params(0.05, correlated=correlated)
    times = np.concatenate(([0.0], np.cumsum(steps)))
    cov = np.zeros((4, 4))
    for a, b in zip(times[:-1], times[1:]):
        m = transport_matrix(p, b - a)
        cov = m @ cov @ m.T + increment_cov(p, a, b)
    target = state_cov(p, times[-1])
    assert np.max(np.abs(cov - target)) <= 1e-12 * max(1.0, np.max(np.abs(target)))


def test_covariances_vanish_continuously_at_zero():
    p = market_params(0.05, correlated=True)
    assert np.max(np.abs(state_cov(p, 1e-9))) < 1e-8


def test_correlation_psd_check():
    with pytest.raises(ModelError):
        market_params(rho_sd=0.9, rho_sf=0.9, rho_df=-0.9)
    with pytest.raises(ModelError):
        market_params(rho_sd=1.5)
    with pytest.raises(ModelError):
        market_params(s0=0.0)
    with pytest.raises(ModelError):
        market_params(sigma_s=-0.1)
    assert market_params(rho_sd=1.0, rho_sf=1.0, rho_df=1.0).blocks_independent is False


def test_spot_from_state_examples():
    p = market_params(0.05, correlated=True)
    assert spot_from_state(p, 0.0, 0.0, 0.0) == pytest.approx(p.s0, rel=1e-15)
    t, x, y, c = 3.0, 0.2, -0.1, 0.37
    base = spot_from_state(p, t, x, y)
    d = phi_d(p, t) * math.exp(-y)
    shifted = spot_from_state(p, t, x - c, y + c, discount=d * math.exp(-c))
    assert shifted == pytest.approx(spot_from_state(p, t, x, y, discount=d), rel=1e-14)
    assert base == pytest.approx(spot_from_state(p, t, x, y, discount=d), rel=1e-15)
    flat = market_params(0.0, sigma_s=0.0)
    assert spot_from_state(flat, 4.0, 0.0, 0.0) == pytest.approx(p.s0 * math.exp((0.015 - 0.01) * 4), rel=1e-14)
    with pytest.raises(ModelError):
        spot_from_state(p, 1.0, 0.0, 0.0, discount=0.0)


def test_simulation_matches_state_law():
    p = market_params(0.05, correlated=True)
    paths = simulate_states(p, [0.5, 2.0], 1_000_000, seed=5)
    x = paths[:, 1, :]
    target = state_cov(p, 2.0)
    n = x.shape[0]
    for i in range(4):
        assert abs(x[:, i].mean()) <= 4 * math.sqrt(target[i, i] / n)
        for j in range(i, 4):
            prod = x[:, i] * x[:, j]
            se = prod.std(ddof=1) / math.sqrt(n)
            assert abs(prod.mean() - target[i, j]) <= 4 * se


def test_simulation_edge_cases():
    zero = market_params(0.0, sigma_s=0.0)
    paths = simulate_states(zero, [1.0, 2.0], 10, 1)
    assert np.array_equal(paths[..., [0, 2]], np.zeros((10, 2, 2)))
    assert np.all(paths[..., 1] != 0)
    p = market_params()
    a = simulate_states(p, [0.0, 1.0], 100, 3)
    assert np.array_equal(a, simulate_states(p, [0.0, 1.0], 100, 3))
    assert np.array_equal(a[:, 0], np.zeros((100, 4)))
    assert not np.array_equal(a, simulate_states(p, [0.0, 1.0], 100, 4))
    for bad in ([2.0, 1.0], [1.0, 1.0], [-1.0, 1.0]):
        with pytest.raises(ModelError):
            simulate_states(p, bad, 10, 0)


def test_flat_and_tabulated_curves(tmp_path):
    flat = InitialCurve.flat(0.02)
    assert flat(0.0) == 1.0 and flat(2.0) == pytest.approx(math.exp(-0.04))
    tab = InitialCurve(tenors=(0.0, 1.0, 3.0), discounts=(1.0, 0.98, 0.9))
    assert tab(1.0) == pytest.approx(0.98)
    assert tab(2.0) == pytest.approx(math.sqrt(0.98 * 0.9))
    fwd = math.log(0.9 / 0.98) / 2
    assert tab(5.0) == pytest.approx(0.9 * math.exp(fwd * 2))
    csv = tmp_path / "curve.csv"
    csv.write_text("tenor_years,discount\n0,1\n1,0.98\n3,0.9\n")
    assert InitialCurve.from_csv(csv) == tab
    for tenors, discounts in [((0.0,), (1.0,)), ((0.5, 1.0), (1.0, 0.9)), ((0.0, 1.0), (1.0, 1.2)),
                              ((0.0, 2.0, 1.0), (1.0, 0.9, 0.8)), ((0.0, 1.0, 2.0), (1.0, 0.9, 0.95))]:
        with pytest.raises(ModelError):
            InitialCurve(tenors=tenors, discounts=discounts)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,d\n0,1\n")
    with pytest.raises(ModelError):
        InitialCurve.from_csv(bad)
    with pytest.raises(ModelError):
        flat(-1.0)
