import numpy as np
import pytest

from helpers import market_params, prdc_product, yearly
from qprdc.closed_form import european_prdc
from qprdc.payoff import obstacle_h
from qprdc.pricer import european_cubature, exercise_boundary, layer_obstacle, price_bermudan
from qprdc.tree import GridSizes, McConfig, TreeError, allocate_sizes, build_tree


@pytest.fixture(scope="module")
def tree10():
    return build_tree(market_params(0.005), yearly(10), GridSizes("2d", (60, 6)))


@pytest.mark.parametrize("mode,levels", [("2d", (80, 8)), ("4d", (12, 3, 4, 1))])
def test_single_date_equals_cubature(mode, levels):
    p = market_params(0.05)
    spec = prdc_product(3.0)
    tree = build_tree(p, spec, GridSizes(mode, levels))
    berm = price_bermudan(tree, p, spec).v0
    cub = european_cubature(tree, p, spec).v0
    assert abs(berm - cub) <= 1e-12 * abs(cub)


def test_one_node_tree_hand_recursion():
    p = market_params(0.05, correlated=True)
    spec = prdc_product(yearly(5), cd=[0.15, 0.12, 0.2, 0.1, 0.13])
    for mode in ("2d", "4d"):
        levels = (1,) * (2 if mode == "2d" else 4)
        tree = build_tree(p, spec, GridSizes(mode, levels), mc=McConfig(10, seed=0))
        expected = max(obstacle_h(p, spec, k, 0.0, 0.0) for k in range(1, 6))
        assert price_bermudan(tree, p, spec).v0 == pytest.approx(expected, rel=1e-15)


def test_cubature_requires_two_layers(tree10):
    p = market_params(0.005)
    with pytest.raises(TreeError):
        european_cubature(tree10, p, prdc_product(yearly(10)))


def test_bermudan_dominates_european():
    p = market_params(0.005)
    sizes = allocate_sizes(4000, "2d")
    spec = prdc_product(yearly(5))
    berm = price_bermudan(build_tree(p, spec, sizes), p, spec).v0
    last = spec.single_date(5)
    euro = european_cubature(build_tree(p, last, sizes), p, last).v0
    assert berm >= euro - 1e-6
    assert euro == pytest.approx(european_prdc(p, last), rel=1e-3)


def test_more_exercise_dates_never_lower_the_price(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10))
    flags = np.zeros(10, dtype=bool)
    flags[-1] = True
    prices = []
    for k in [9, 4, 0, 2, 6, 1, 8, 3, 5, 7]:
        flags[k] = True
        prices.append(price_bermudan(tree10, p, spec.with_exercisable(flags.copy())).v0)
    assert all(b >= a for a, b in zip(prices, prices[1:]))
    assert prices[-1] == price_bermudan(tree10, p, spec).v0


def test_payoff_monotonicity(tree10):
    p = market_params(0.005)
    low = prdc_product(yearly(10))
    high = prdc_product(yearly(10), cap=0.06, floor=0.001, cd=0.14)
    assert np.all(high.psi(3, np.linspace(1, 300, 100)) >= low.psi(3, np.linspace(1, 300, 100)))
    assert price_bermudan(tree10, p, high).v0 >= price_bermudan(tree10, p, low).v0


def test_determinism(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10))
    a = price_bermudan(tree10, p, spec)
    b = price_bermudan(build_tree(p, spec, GridSizes("2d", (60, 6))), p, spec)
    assert a.v0 == b.v0
    assert all(np.array_equal(x, y) for x, y in zip(a.values, b.values))


def test_floor_leg_lower_bound(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10), floor=0.01)
    v0 = price_bermudan(tree10, p, spec).v0
    unit = prdc_product(yearly(10)).with_payoff(lambda k, s: np.ones_like(s))
    zc1 = tree10.transitions[0].apply(layer_obstacle(tree10, p, unit, 1))[0]
    assert v0 >= 0.01 * zc1
    assert v0 >= 0.01 * p.curve_d(1.0) * (1 - 1e-6)


def test_constant_unit_coupon_at_first_date():
    p = market_params(0.05)
    spec = prdc_product(1.0, floor=1.0, cap=1.0)
    tree = build_tree(p, spec, allocate_sizes(32000, "2d"))
    assert price_bermudan(tree, p, spec).v0 == pytest.approx(p.curve_d(1.0), rel=1e-5)


def test_all_flagged_when_exercise_dominates(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10)).with_payoff(lambda k, s: np.where(k == 9, 1.0, 0.0) * np.ones_like(s))
    res = price_bermudan(tree10, p, spec)
    assert np.all(res.exercise_flags[9])
    assert exercise_boundary(res, 9).shape == (tree10.layers[9].size, 2)


def test_no_flags_when_floor_dominated(tree10):
    p = market_params(0.005)
    # date 5 pays the zero floor everywhere while later dates pay a positive floor
    cd = [0.15] * 10
    cd[4] = 10.0
    floor = [0.01] * 10
    floor[4] = 0.0
    spec = prdc_product(yearly(10), cd=cd, floor=floor)
    res = price_bermudan(tree10, p, spec)
    assert not np.any(res.exercise_flags[5])
    assert exercise_boundary(res, 5).shape == (0, 2)


def test_flags_are_upper_sets_in_x():
    p = market_params(0.005)
    spec = prdc_product(yearly(10))
    tree = build_tree(p, spec, GridSizes("2d", (20, 2)))
    res = price_bermudan(tree, p, spec)
    for k in range(1, 11):
        flags = res.exercise_flags[k].reshape(20, 2)
        h = layer_obstacle(tree, p, spec, k).reshape(20, 2)
        c = res.continuation[k].reshape(20, 2)
        assert np.array_equal(flags, h >= c)
        for iy in range(2):
            col = flags[:, iy]
            if col.any():
                first = int(np.argmax(col))
                assert col[first:].all(), f"date {k}, y-index {iy}: {col.astype(int)}"


def test_t0_exercise_and_non_exercisable_terminal(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10))
    base = price_bermudan(tree10, p, spec)
    with_t0 = price_bermudan(tree10, p, spec, exercise_at_t0=True)
    assert with_t0.v0 == max(base.v0, spec.psi(1, p.s0))
    assert not base.exercise_flags[0][0]
    flags = np.ones(10, dtype=bool)
    flags[-1] = False
    res = price_bermudan(tree10, p, spec.with_exercisable(flags))
    assert np.all(res.values[10] == 0) and not res.exercise_flags[10].any()


def test_retention_and_validation_errors(tree10):
    p = market_params(0.005)
    spec = prdc_product(yearly(10))
    res = price_bermudan(tree10, p, spec, retain=False)
    assert res.v0 == price_bermudan(tree10, p, spec).v0 and res.values is None
    with pytest.raises(ValueError):
        exercise_boundary(res, 3)
    with pytest.raises(TreeError):
        price_bermudan(tree10, p, prdc_product(yearly(9)))
    with pytest.raises(TreeError):
        price_bermudan(tree10, p, prdc_product(np.arange(1, 11) + 0.5))
    bare = build_tree(p, spec, GridSizes("2d", (6, 2)), with_transitions=False)
    with pytest.raises(TreeError):
        price_bermudan(bare, p, spec)
    assert {"mode", "levels", "nodes_per_date", "induction_ms", "grid_ms", "transition_ms"} <= set(res.meta)
