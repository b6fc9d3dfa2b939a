import math

import numpy as np
import pytest
from collections import Counter

from branchlab import exact as ex
from branchlab import offspring as off
from branchlab import samplers as sam
from branchlab.rng import RngStream
from branchlab.trees import HEIGHT, PlaneTree, TOTAL_PROGENY

BIN = off.binary()
GEO = off.geometric(0.5, cap=60)


def se_band(p, n, k=4):
    return k * math.sqrt(p * (1 - p) / n)


def test_sample_gw_deterministic():
    r = RngStream(42).child(7)
    t1 = sam.sample_gw(BIN, r, 10**6)
    t2 = sam.sample_gw(BIN, r, 10**6)
    assert t1 == t2


def test_sample_gw_overflow_is_value():
    r = RngStream(3)
    results = [sam.sample_gw(BIN, r.child(i), 4) for i in range(400)]
    overflows = [x for x in results if isinstance(x, sam.Overflow)]
    trees = [x for x in results if isinstance(x, PlaneTree)]
    assert overflows and trees
    assert all(o.nodes_generated > 4 for o in overflows)


def test_root_degree_and_progeny_laws():
    n = 100_000
    batch = sam.gw_batch(BIN, RngStream(11).child(0), n, node_cap=10**5)
    pt = ex.progeny_pmf(BIN, 1, 10)
    p3 = (batch.progeny == 3).mean()
    assert abs(p3 - pt.point_mass(3)) < se_band(pt.point_mass(3), n)
    root2 = (batch.maxdeg > 0).mean()  # binary: root has children iff degree 2
    assert abs(root2 - 0.5) < se_band(0.5, n)


def test_batch_vs_exact_height_width():
    n = 100_000
    batch = sam.gw_batch(GEO, RngStream(12).child(0), n, node_cap=10**5)
    ht = ex.height_tail(GEO, 12)
    wt = ex.width_table(GEO, 8)
    for thr in (2, 5):
        emp = (batch.height > thr).mean()
        assert abs(emp - ht.tail(thr)) < se_band(ht.tail(thr), n) + 1e-3
    emp_w = (batch.width > 4).mean()
    assert abs(emp_w - wt.tail(4)) < se_band(wt.tail(4), n) + 1e-3


def test_batch_prefix_keys_follow_the_restriction_law():
    batch = sam.gw_batch(BIN, RngStream(13).child(999), 3000, node_cap=10**5, prefix_height=2)
    pt = ex.enumerate_trees(2, 2, 7)
    exact_law = {t: ex.prefix_prob(BIN, t, 2) for t in pt}
    counts = Counter()
    for key in batch.prefix_keys:
        counts[sam.bfs_to_preorder(np.frombuffer(key, dtype=np.uint32).astype(np.int64))] += 1
    emp = sam.counts_to_prefix_law(counts, 2)
    tv = ex.tv_distance(emp, ex.PrefixLaw(2, exact_law, 0.0))
    assert tv < 0.04


def test_bfs_preorder_round_trip():
    for text in ("0", "2 0 1 0", "3 1 0 0 0", "2 2 0 0 2 0 0"):
        t = PlaneTree.from_string(text)
        levels = []
        depths = t.depths
        for h in range(t.height + 1):
            levels.append([d for d, dep in zip(t.degrees, depths) if dep == h])
        flat = [d for level in levels for d in level]
        assert sam.bfs_to_preorder(np.array(flat)) == t


def test_forest_sampler():
    f = sam.sample_forest(BIN, 3, RngStream(5).child(0))
    assert len(f) == 3
    assert sam.sample_forest(BIN, 3, RngStream(5).child(0)) == f
    n = 50_000
    counts = 0
    for i in range(n):
        fr = sam.sample_forest(BIN, 2, RngStream(6).child(i), 10**4)
        if isinstance(fr, sam.Overflow):
            continue
        if fr.n_nodes == 2:
            counts += 1
    # P[L(forest of 2) = 2] = p_0^2 = 1/4
    assert abs(counts / n - 0.25) < se_band(0.25, n)


def test_immortal_prefix_matches_exact_law():
    n = 200_000
    counts = sam.immortal_prefix_counts(GEO, RngStream(21).child(0), 1, n)
    emp = sam.counts_to_prefix_law(counts, 1)
    exact = ex.immortal_prefix_law(GEO, 1)
    assert ex.tv_distance(emp, exact) < 0.01
    # chi-square on the root degree against k 2^-(k+1)
    chi = 0.0
    dof = 0
    for k in range(1, 12):
        star = PlaneTree((k,) + (0,) * k)
        expect = n * exact.prob(star)
        got = counts.get(star, 0)
        if expect > 10:
            chi += (got - expect) ** 2 / expect
            dof += 1
    from scipy.stats import chi2

    assert chi < chi2.ppf(1 - 1e-3, dof)


def test_immortal_binary_forced_star():
    assert sam.sample_immortal_prefix(BIN, RngStream(1).child(0), 1) == PlaneTree((2, 0, 0))


def test_immortal_prefix_b3_tv():
    counts = sam.immortal_prefix_counts(BIN, RngStream(22).child(0), 3, 200_000)
    emp = sam.counts_to_prefix_law(counts, 3)
    exact = ex.immortal_prefix_law(BIN, 3)
    assert ex.tv_distance(emp, exact) < 0.012


def test_conditioned_sampler_against_exact_law():
    counts, info = sam.conditioned_prefix_counts(
        BIN, HEIGHT, ex.Tail(4), 1, RngStream(23).child(0), 20_000
    )
    emp = sam.counts_to_prefix_law(counts, 1)
    exact = ex.conditioned_prefix_law(BIN, HEIGHT, ex.Tail(4), 1)
    assert ex.tv_distance(emp, exact) < 0.02
    v4 = ex.height_tail(BIN, 5).tail(4)
    assert abs(info["acceptance_rate"] - v4) < se_band(v4, info["attempts"])


def test_conditioned_point_zero_mass_detected():
    res = sam.sample_conditioned(BIN, TOTAL_PROGENY, ex.Point(4), RngStream(2).child(0))
    assert isinstance(res, sam.BudgetExhausted)
    assert res.reason == "zero_probability"


def test_conditioned_budget_exhaustion():
    res = sam.sample_conditioned(
        BIN, HEIGHT, ex.Tail(10**6), RngStream(2).child(1),
        sam.SamplerBudget(max_attempts=50),
    )
    assert isinstance(res, sam.BudgetExhausted)
    assert res.attempts == 50


def test_condensation_prefix_law_hand_values():
    sub = off.explicit([0.5, 0.5])
    n = 60_000
    counts = sam.condensation_prefix_counts(sub, RngStream(31).child(0), 3, n)
    emp = {t.to_string(): c / n for t, c in counts.items()}
    # cap L geometric(mean): P[L=j] = mu^j (1-mu); below the cap the spine is
    # deterministic here, the cap node restarts a plain tree
    expected = {"0": 1 / 4, "1 0": 1 / 4, "1 1 0": 3 / 16, "1 1 1 0": 5 / 16}
    for key, want in expected.items():
        assert abs(emp.get(key, 0.0) - want) < se_band(want, n), key


def test_immortal_sampler_rejects_supercritical():
    with pytest.raises(ValueError):
        sam.sample_immortal_prefix(off.explicit([0.2, 0.2, 0.6]), RngStream(1), 2)
