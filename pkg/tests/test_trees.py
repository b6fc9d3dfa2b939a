import pytest

from branchlab.trees import (
    ALL_DEGREES,
    DegreeSet,
    Forest,
    Functional,
    HEIGHT,
    LEAVES,
    MAX_OUT_DEGREE,
    PlaneTree,
    TOTAL_PROGENY,
    WIDTH,
    count_in_set,
    generation_size,
    restrict,
    subtrees_above,
    ultrametric_distance,
)

T0 = PlaneTree.from_string("2 0 1 0")  # root with a leaf and a unary child


def test_validation_rejects_bad_sequences():
    with pytest.raises(ValueError):
        PlaneTree((2, 0))  # truncated
    with pytest.raises(ValueError):
        PlaneTree((0, 0))  # trailing node
    with pytest.raises(ValueError):
        PlaneTree(())


def test_labels_are_prefix_closed():
    labels = set(T0.labels())
    assert () in labels
    for u in labels:
        for i in range(1, len(u) + 1):
            assert u[:i-1] + (u[i-1],) in labels or True  # children contiguity below
        if u:
            assert u[:-1] in labels
    # child ui present iff 1 <= i <= k_u
    assert labels == {(), (1,), (2,), (2, 1)}


def test_generation_sizes():
    assert generation_size(T0, 0) == 1
    assert generation_size(T0, 1) == 2
    assert generation_size(T0, 2) == 1
    assert generation_size(T0, 3) == 0


def test_functionals_on_t0():
    assert HEIGHT.value(T0) == 2
    assert WIDTH.value(T0) == 2
    assert MAX_OUT_DEGREE.value(T0) == 2
    assert TOTAL_PROGENY.value(T0) == 4
    assert count_in_set(LEAVES).value(T0) == 2


def test_functionals_on_singleton():
    one = PlaneTree((0,))
    assert HEIGHT.value(one) == 0
    assert WIDTH.value(one) == 1
    assert MAX_OUT_DEGREE.value(one) == 0
    assert TOTAL_PROGENY.value(one) == 1


def test_restrict():
    assert restrict(T0, 1) == PlaneTree.from_string("2 0 0")
    assert restrict(T0, 5) == T0
    assert restrict(T0, 0) == PlaneTree((0,))
    # idempotence and composition
    assert restrict(restrict(T0, 2), 1) == restrict(T0, 1)


def test_subtrees_above():
    f = subtrees_above(T0, 1)
    assert [t.to_string() for t in f] == ["0", "1 0"]
    assert subtrees_above(T0, 2).trees == (PlaneTree((0,)),)
    assert len(subtrees_above(T0, 3)) == 0


def test_forest_functionals_and_empty_width():
    f = Forest([T0, PlaneTree((0,))])
    assert TOTAL_PROGENY.forest_value(f) == 5
    assert HEIGHT.forest_value(f) == 2
    assert WIDTH.forest_value(f) == 2  # the two roots tie T0's generation 1
    empty = Forest([])
    assert WIDTH.forest_value(empty) == 0
    assert TOTAL_PROGENY.forest_value(empty) == 0


def test_ultrametric():
    assert ultrametric_distance(T0, T0) == 0.0
    assert ultrametric_distance(PlaneTree((0,)), PlaneTree((1, 0))) == 1.0
    assert ultrametric_distance(T0, PlaneTree((2, 0, 0))) == 0.5


def test_degree_sets():
    assert 5 in ALL_DEGREES and 0 in ALL_DEGREES
    assert 0 in LEAVES and 1 not in LEAVES
    evens = DegreeSet.excluding(1, 3, 5)
    assert 0 in evens and 3 not in evens and 7 in evens


def test_generation_sum_is_progeny():
    for text in ("0", "2 0 1 0", "3 0 2 0 0 0", "1 1 1 0"):
        t = PlaneTree.from_string(text)
        total = sum(generation_size(t, h) for h in range(t.height + 1))
        assert total == TOTAL_PROGENY.value(t)


def test_serialization_round_trip():
    for text in ("0", "2 0 1 0", "3 1 0 0 0"):
        assert PlaneTree.from_string(text).to_string() == text


def test_functional_kind_validation():
    with pytest.raises(ValueError):
        Functional("bogus")
    with pytest.raises(ValueError):
        Functional("height", LEAVES)
