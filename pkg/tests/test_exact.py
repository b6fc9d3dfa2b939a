"""Exact-engine laws against hand values, closed forms, and enumeration."""
import math
from fractions import Fraction

import numpy as np
import pytest

from branchlab import exact as ex
from branchlab import offspring as off
from branchlab.trees import (
    ALL_DEGREES,
    HEIGHT,
    LEAVES,
    MAX_OUT_DEGREE,
    PlaneTree,
    TOTAL_PROGENY,
    WIDTH,
    count_in_set,
    generation_size,
)

BIN = off.binary()
GEO = off.geometric(0.5, cap=60)
SUB = off.explicit([0.5, 0.5])
T0 = PlaneTree.from_string("2 0 1 0")


# -- height ------------------------------------------------------------------


def test_height_tail_binary():
    t = ex.height_tail(BIN, 10)
    assert t.tail(0) == pytest.approx(0.5, abs=1e-15)
    assert t.tail(1) == pytest.approx(3 / 8, abs=1e-15)


def test_height_tail_binary_exact_rational():
    # the same recursion in exact rational arithmetic, as a float-error oracle
    # fraction sizes double per step, so a dozen generations suffice
    q = Fraction(0)
    t = ex.height_tail(BIN, 12)
    for n in range(13):
        q = Fraction(1, 2) + Fraction(1, 2) * q * q
        assert abs(t.tail(n) - float(1 - q)) < 1e-14


def test_height_tail_geometric_closed_form():
    t = ex.height_tail(GEO, 50)
    for n in range(50):
        # P[H >= n] = 1/(n+1), so P[H > n] = 1/(n+2)
        assert t.tail(n) == pytest.approx(1.0 / (n + 2), rel=1e-9)
    assert t.tail(3) == pytest.approx(0.2, rel=1e-9)


# -- maximal out-degree --------------------------------------------------------


def test_maxdeg_binary():
    t = ex.maxdeg_tail(BIN, 4)
    assert 1.0 - t.tail(1) == pytest.approx(0.5, abs=1e-14)
    assert t.tail(2) == 0.0
    assert t.tail(3) == 0.0


def test_maxdeg_geometric():
    t = ex.maxdeg_tail(GEO, 5)
    # s = p0 + p1 s at n=1 gives s = 2/3
    assert 1.0 - t.tail(1) == pytest.approx(2 / 3, rel=1e-12)


def test_maxdeg_newton_matches_iteration():
    for p in (BIN, GEO):
        tn = ex.maxdeg_tail(p, 5, method="newton")
        ti = ex.maxdeg_tail(p, 5, method="iteration")
        assert np.allclose(tn.v, ti.v, atol=5e-13)


def test_least_fixed_point_supercritical():
    # full-mass supercritical pgf: the least fixed point is the extinction
    # probability, 1/4 for p = (1/4 + 3/4 s^2)
    coef = np.array([0.25, 0.0, 0.75])
    assert ex.least_fixed_point(coef) == pytest.approx(1 / 3, abs=1e-12)


# -- total progeny ---------------------------------------------------------------


def test_progeny_binary_hand_values():
    t = ex.progeny_pmf(BIN, 2, 12)
    assert t.point_mass(1) == pytest.approx(0.5, abs=1e-15)
    assert t.point_mass(3) == pytest.approx(1 / 8, abs=1e-15)
    assert t.point_mass(2) == 0.0
    assert t.forest_point(2, 2) == pytest.approx(1 / 4, abs=1e-15)


def test_progeny_catalan():
    t = ex.progeny_pmf(BIN, 1, 21)
    for k in range(0, 10):
        catalan = math.comb(2 * k, k) // (k + 1)
        assert t.point_mass(2 * k + 1) == pytest.approx(
            catalan * 0.5 ** (2 * k + 1), rel=1e-12
        )


# -- width ------------------------------------------------------------------------


def test_width_hand_values():
    assert ex.width_cdf(BIN, 1, 1) == pytest.approx(0.5, abs=1e-12)
    assert ex.width_cdf(GEO, 1, 1) == pytest.approx(2 / 3, rel=1e-10)
    assert ex.width_cdf(BIN, 2, 1) == 0.0  # two roots already exceed 1


def test_width_cdf_tends_to_one():
    prev = 0.0
    for n in (2, 4, 8, 16, 32):
        val = ex.width_cdf(BIN, 1, n)
        assert val >= prev
        prev = val
    assert prev > 0.93


# -- counts ---------------------------------------------------------------------


def test_count_all_degrees_matches_dwass():
    ct = ex.count_in_set_pmf(BIN, ALL_DEGREES, 2, 12)
    pt = ex.progeny_pmf(BIN, 2, 12)
    for n in range(13):
        assert ct.point_mass(n) == pytest.approx(pt.point_mass(n), abs=1e-12)
        assert ct.forest_point(2, n) == pytest.approx(pt.forest_point(2, n), abs=1e-12)


def test_leaf_counts_binary():
    t = ex.count_in_set_pmf(BIN, LEAVES, 1, 8)
    assert t.point_mass(1) == pytest.approx(0.5, abs=1e-12)
    assert t.point_mass(2) == pytest.approx(1 / 8, abs=1e-12)


# -- tables ------------------------------------------------------------------------


def test_tail_table_consistency():
    for table in (
        ex.height_tail(GEO, 12),
        ex.maxdeg_tail(GEO, 12),
        ex.progeny_pmf(BIN, 1, 12),
        ex.width_table(BIN, 8),
        ex.count_in_set_pmf(BIN, LEAVES, 1, 12),
    ):
        v = table.v
        assert np.all(np.diff(v) <= 1e-15)  # nonincreasing
        pts = table.points()
        assert np.all(pts >= -1e-12)
        assert table.tail(0) + table.point_mass(0) == pytest.approx(1.0, abs=1e-10)
        for n in range(1, table.N + 1):
            assert table.point_mass(n) == pytest.approx(
                table.tail(n - 1) - table.tail(n), abs=1e-14
            )


# -- prefix probabilities -------------------------------------------------------------


def test_prefix_prob():
    assert ex.prefix_prob(BIN, PlaneTree((2, 0, 0)), 1) == 0.5
    assert ex.prefix_prob(BIN, PlaneTree((2, 0, 0)), 2) == 0.125
    assert ex.prefix_prob(GEO, T0, 2) == pytest.approx(1 / 64, rel=1e-10)
    with pytest.raises(ValueError):
        ex.prefix_prob(BIN, T0, 1)


def test_expected_generation_size_is_mean_power():
    # over a degree-capped enumeration the sum of Y_b-weighted prefix masses
    # follows f(b) = f(b-1) P'(g(b-1)), g(b) = P(g(b-1)) for the capped pgf
    # P; with the cap covering the support this is exactly mean^b
    for p, cap in ((BIN, 2), (GEO, 3), (SUB, 1)):
        coef = p.pmf[: min(cap, p.max_degree) + 1]
        dcoef = np.arange(1, coef.size) * coef[1:]
        polyval = np.polynomial.polynomial.polyval
        f, g = 1.0, 1.0
        for b in (1, 2, 3):
            f *= float(polyval(g, dcoef))
            g = float(polyval(g, coef))
            trees = ex.enumerate_trees(cap, b, 1 + cap + cap**2 + cap**3)
            total = sum(
                generation_size(t, b) * ex.prefix_prob(p, t, b) for t in trees
            )
            assert total == pytest.approx(f, rel=1e-12)
    # with the full support the identity is mean^b = 1 at criticality
    assert ex.immortal_prefix_law(BIN, 3).total == pytest.approx(1.0, abs=1e-10)


# -- immortal laws ------------------------------------------------------------------


def test_immortal_law_binary():
    law = ex.immortal_prefix_law(BIN, 1)
    assert law.prob(PlaneTree((2, 0, 0))) == pytest.approx(1.0, abs=1e-12)
    law3 = ex.immortal_prefix_law(BIN, 3)
    assert law3.total == pytest.approx(1.0, abs=1e-12)
    assert law3.deficiency == 0.0


def test_immortal_law_geometric_b1():
    law = ex.immortal_prefix_law(GEO, 1)
    for k in (1, 2, 5):
        star = PlaneTree((k,) + (0,) * k)
        assert law.prob(star) == pytest.approx(k * 2.0 ** -(k + 1), rel=1e-9)


def test_immortal_law_subcritical_path():
    law = ex.immortal_prefix_law(SUB, 2)
    assert law.prob(PlaneTree((1, 1, 0))) == pytest.approx(1.0, abs=1e-12)


def test_spine_route_matches_identity_route():
    for p, b in ((BIN, 3), (GEO, 2), (SUB, 3)):
        law = ex.immortal_prefix_law(p, b, max_degree=5)
        items = sorted(law.items(), key=lambda kv: -kv[1])[:100]
        for t, prob in items:
            assert ex.spine_prefix_prob(p, t, b) == pytest.approx(prob, rel=1e-10)


def test_immortal_rejects_supercritical():
    with pytest.raises(ValueError):
        ex.immortal_prefix_law(off.explicit([0.2, 0.2, 0.6]), 1)


# -- conditioned laws ------------------------------------------------------------------


def test_conditioned_height_tail_binary():
    law = ex.conditioned_prefix_law(BIN, HEIGHT, ex.Tail(4), 1)
    assert law.prob(PlaneTree((2, 0, 0))) == pytest.approx(1.0, abs=1e-12)


def test_conditioned_height_tail_geometric_hand_value():
    law = ex.conditioned_prefix_law(GEO, HEIGHT, ex.Tail(1), 1, max_degree=40)
    assert law.prob(PlaneTree((1, 0))) == pytest.approx(3 / 8, rel=1e-9)


def test_conditioned_progeny_point_binary():
    law = ex.conditioned_prefix_law(BIN, TOTAL_PROGENY, ex.Point(3), 1)
    assert law.prob(PlaneTree((2, 0, 0))) == pytest.approx(1.0, abs=1e-12)


def test_conditioned_weights_sum_to_event_probability():
    # the decomposition across subtrees must reproduce the event probability
    for f, cond in (
        (HEIGHT, ex.Tail(6)),
        (HEIGHT, ex.Point(6)),
        (WIDTH, ex.Tail(5)),
        (WIDTH, ex.Point(4)),
        (TOTAL_PROGENY, ex.Point(7)),
        (MAX_OUT_DEGREE, ex.Point(2)),
        (count_in_set(LEAVES), ex.Point(4)),
    ):
        law = ex.conditioned_prefix_law(BIN, f, cond, 2)
        assert law.meta["support_mass_gap"] == pytest.approx(0.0, abs=1e-10), f.name
        assert law.total == pytest.approx(1.0, abs=1e-10)


def test_conditioned_zero_probability():
    with pytest.raises(ex.ZeroProbabilityEvent):
        ex.conditioned_prefix_law(BIN, TOTAL_PROGENY, ex.Point(4), 1)
    with pytest.raises(ex.ZeroProbabilityEvent):
        ex.conditioned_prefix_law(BIN, MAX_OUT_DEGREE, ex.Tail(2), 1)


def test_width_point_needs_bounded_support():
    with pytest.raises(ValueError):
        ex.conditioned_prefix_law(GEO, WIDTH, ex.Point(5), 1)


def test_conditioned_vs_direct_enumeration():
    # brute force: P[r_2 = t | A cond] over all trees with <= 14 nodes,
    # restricted to conditionings whose trees are pinned by the cap
    trees = ex.enumerate_trees(2, 14, 14)
    probs = ex.enumeration_law(BIN, trees)
    cond = ex.Point(7)
    num: dict[PlaneTree, float] = {}
    den = 0.0
    from branchlab.trees import restrict

    for t, pr in zip(trees, probs):
        if t.n_nodes == 7:
            den += pr
            key = restrict(t, 2)
            num[key] = num.get(key, 0.0) + pr
    law = ex.conditioned_prefix_law(BIN, TOTAL_PROGENY, cond, 2)
    assert law.total == pytest.approx(1.0, abs=1e-12)
    for t, pr in num.items():
        assert law.prob(t) == pytest.approx(pr / den, rel=1e-10)


# -- tv distance -----------------------------------------------------------------------


def test_tv_distance():
    a = ex.PrefixLaw(1, {PlaneTree((0,)): 1.0})
    b = ex.PrefixLaw(1, {PlaneTree((1, 0)): 1.0})
    c = ex.PrefixLaw(1, {PlaneTree((0,)): 0.5, PlaneTree((1, 0)): 0.5})
    assert ex.tv_distance(a, a) == 0.0
    assert ex.tv_distance(a, b) == 1.0
    assert ex.tv_distance(a, c) == 0.5
    with pytest.raises(ValueError):
        ex.tv_distance(a, ex.PrefixLaw(2, {}))


def test_tv_deficiency_is_conservative():
    a = ex.PrefixLaw(1, {PlaneTree((0,)): 0.7}, deficiency=0.3)
    b = ex.PrefixLaw(1, {PlaneTree((0,)): 0.7, PlaneTree((1, 0)): 0.3})
    assert ex.tv_distance(a, b) == pytest.approx(0.3)


# -- enumeration -----------------------------------------------------------------------


def test_enumerate_counts():
    assert len(ex.enumerate_trees(2, 1, 100)) == 3
    assert len(ex.enumerate_trees(1, 2, 100)) == 3
    # binary-degree trees of height <= 4: 677 of them
    trees = [t for t in ex.enumerate_trees(2, 4, 31) if all(d in (0, 2) for d in t.degrees)]
    assert len(trees) == 677
    # all trees with <= 6 nodes: 1+1+2+5+14+42
    assert len(ex.enumerate_trees(5, 6, 6)) == 65


def test_enumerate_no_duplicates_and_sorted():
    trees = ex.enumerate_trees(3, 3, 8)
    keys = [(t.n_nodes, t.degrees) for t in trees]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


def test_enumerate_budget():
    with pytest.raises(ex.EnumerationBudgetError):
        ex.enumerate_trees(11, 12, 12, budget=1000)
