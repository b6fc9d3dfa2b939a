import numpy as np

from branchlab.rng import BufferedDraws, RngStream, splitmix64


def test_streams_are_reproducible():
    a = RngStream(123).child(4).child(2).generator().random(8)
    b = RngStream(123).child(4).child(2).generator().random(8)
    assert np.array_equal(a, b)


def test_sibling_streams_differ():
    a = RngStream(123).child(0).generator().random(8)
    b = RngStream(123).child(1).generator().random(8)
    assert not np.array_equal(a, b)


def test_child_order_is_irrelevant_to_identity():
    # the stream is named by its path, not by when it was derived
    root = RngStream(9)
    late = root.child(7)
    early = RngStream(9, (7,))
    assert late == early
    assert np.array_equal(late.generator().random(4), early.generator().random(4))


def test_no_collision_on_small_grid():
    seen = set()
    for seed in range(20):
        for i in range(50):
            key = RngStream(seed).child(i)._key
            assert key not in seen
            seen.add(key)


def test_splitmix_is_deterministic():
    assert splitmix64(0) == splitmix64(0)
    assert splitmix64(1) != splitmix64(2)


def test_buffered_draws_match_generator():
    gen = RngStream(5).child(1).generator()
    buf = BufferedDraws(RngStream(5).child(1).generator(), block=16)
    direct = gen.random(40)
    buffered = np.array([buf.uniform() for _ in range(40)])
    assert np.allclose(direct, buffered)
