import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import S0, market_params, prdc_product, yearly
from qprdc.model import phi_d, phi_f
from qprdc.payoff import (ProductError, ProductSpec, call_decomposition, load_product, obstacle_h,
                          prdc_payoff, product_from_dict)


def test_payoff_at_reference_spot():
    spec = prdc_product(2.0)
    assert prdc_payoff(spec, 1, S0) == pytest.approx(0.039, abs=1e-15)


def test_payoff_clamps():
    spec = prdc_product(2.0)
    assert prdc_payoff(spec, 1, 1e-12) == 0.0
    assert prdc_payoff(spec, 1, 1e12) == 0.0555


@given(st.floats(1e-6, 1e4), st.floats(1e-6, 1e4))
def test_payoff_monotone_bounded_lipschitz(s1, s2):
    spec = prdc_product(2.0)
    p1, p2 = prdc_payoff(spec, 1, s1), prdc_payoff(spec, 1, s2)
    assert 0.0 <= p1 <= 0.0555
    if s1 <= s2:
        assert p1 <= p2
    assert abs(p1 - p2) <= 0.189 / S0 * abs(s1 - s2) * (1 + 1e-12) + 1e-17


def test_decomposition_prdc_product():
    floor, a, k1, k2 = call_decomposition(prdc_product(2.0), 1)
    assert floor == 0.0
    assert a == pytest.approx(0.189 / 88.17, rel=1e-15)
    assert k1 == pytest.approx(95.87, abs=5e-3)
    assert k2 == pytest.approx(69.98, abs=5e-3)
    assert k2 <= k1


@given(st.floats(0.0, 0.1), st.floats(0.0, 0.1), st.floats(0.01, 0.5), st.floats(0.0, 0.3))
def test_decomposition_reconstructs_payoff(floor, width, cf, cd):
    spec = prdc_product(1.0, cd=cd, cf=cf, floor=floor, cap=floor + width)
    fl, a, k1, k2 = call_decomposition(spec, 1)
    s = np.random.default_rng(0).uniform(1e-3, 3 * S0, 1000)
    recon = fl - a * np.maximum(s - k1, 0) + a * np.maximum(s - k2, 0)
    assert np.max(np.abs(recon - prdc_payoff(spec, 1, s))) <= 1e-14


def test_degenerate_decompositions():
    flat = prdc_product(1.0, floor=0.02, cap=0.02)
    fl, a, k1, k2 = call_decomposition(flat, 1)
    assert k1 == k2
    s = np.linspace(1, 300, 50)
    assert np.all(prdc_payoff(flat, 1, s) == 0.02)
    single = prdc_product(1.0, cap=1e300)
    _, a, _, k2 = call_decomposition(single, 1)
    assert np.allclose(prdc_payoff(single, 1, s), a * np.maximum(s - k2, 0), rtol=0, atol=1e-15)


def test_obstacle_examples():
    p = market_params(0.05, correlated=True)
    spec = prdc_product(yearly(3)).with_payoff(lambda k, s: np.ones_like(s))
    for k, y in [(1, 0.0), (2, 0.3), (3, -0.2)]:
        t = float(k)
        assert obstacle_h(p, spec, k, 0.7, y) == pytest.approx(phi_d(p, t) * math.exp(-y), rel=1e-15)
    short = prdc_product(1e-12)
    assert obstacle_h(p, short, 1, 0.0, 0.0) == pytest.approx(0.039, rel=1e-9)
    t = 5.0
    spec = prdc_product(t)
    x, y = 0.13, -0.04
    s = S0 * phi_f(p, t) / phi_d(p, t) * math.exp(-0.125 * t + x + y)
    assert obstacle_h(p, spec, 1, x, y) == pytest.approx(phi_d(p, t) * math.exp(-y) * prdc_payoff(spec, 1, s),
                                                         rel=1e-14)


def test_obstacle_nonnegative_and_lipschitz_in_x():
    p = market_params(0.05, correlated=True)
    spec = prdc_product(yearly(10))
    x = np.linspace(-3.0, 3.0, 2001)
    for y in (-0.5, 0.0, 0.5):
        for k in (1, 5, 10):
            h = obstacle_h(p, spec, k, x, y)
            assert np.all(h >= 0)
            # slope bound: phi_d e^{-y} a S, with S bounded on the box by its value at x = 3
            t = float(k)
            s_max = S0 * phi_f(p, t) / phi_d(p, t) * math.exp(-0.125 * t + 3.0 + y)
            bound = phi_d(p, t) * math.exp(-y) * 0.189 / S0 * s_max
            slope = np.max(np.abs(np.diff(h) / np.diff(x)))
            assert slope <= bound * (1 + 1e-9)


def test_product_json(tmp_path):
    d = {"exercise_dates": [1, 2, 3], "Cd": 0.15, "Cf": [0.189, 0.2, 0.21], "cap": 0.0555,
         "floor": 0.0, "s0_ref": 88.17, "exercisable": [False, True, True]}
    path = tmp_path / "product.json"
    path.write_text(json.dumps(d))
    spec = load_product(path)
    assert spec.cd.tolist() == [0.15] * 3
    assert spec.cf.tolist() == [0.189, 0.2, 0.21]
    assert spec.exercisable.tolist() == [False, True, True]
    assert product_from_dict(spec.to_dict()) == spec
    bad_cases = [
        {k: v for k, v in d.items() if k != "Cd"},
        dict(d, Cf=[0.1, 0.2]),
        dict(d, exercise_dates=[2, 1, 3]),
        dict(d, exercise_dates=[0, 1, 2]),
        dict(d, floor=0.1, cap=0.05),
        dict(d, Cf=0.0),
        dict(d, s0_ref=-1),
        dict(d, exercisable=[True]),
        dict(d, Cd="abc"),
    ]
    for bad in bad_cases:
        with pytest.raises(ProductError):
            product_from_dict(bad)


def test_single_date_and_psi_range():
    spec = prdc_product(yearly(4), cd=[0.1, 0.11, 0.12, 0.13])
    one = spec.single_date(3)
    assert one.exercise_dates.tolist() == [3.0] and one.cd.tolist() == [0.12]
    with pytest.raises(ProductError):
        spec.psi(5, S0)
    with pytest.raises(ProductError):
        spec.with_payoff(lambda k, s: s).to_dict()
    shifted = spec.with_payoff(lambda k, s: k + 0 * s).single_date(3)
    assert shifted.psi(1, 1.0) == 3
    assert isinstance(spec, ProductSpec)
