"""Finite rooted ordered (plane) trees and their functionals.

A tree is stored canonically as its depth-first preorder out-degree sequence.
For the node set this is equivalent to the usual labelling by finite sequences
of positive integers (child ``i`` of ``u`` is ``u + (i,)``); two trees are
equal iff their degree sequences are equal.  The text form ``"2 0 1 0"`` is
used in all CSV/JSON output.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "PlaneTree",
    "Forest",
    "DegreeSet",
    "ALL_DEGREES",
    "LEAVES",
    "Functional",
    "HEIGHT",
    "WIDTH",
    "MAX_OUT_DEGREE",
    "TOTAL_PROGENY",
    "count_in_set",
    "generation_size",
    "restrict",
    "subtrees_above",
    "ultrametric_distance",
]


def _validate_degrees(degrees: tuple[int, ...]) -> None:
    open_nodes = 1
    for i, d in enumerate(degrees):
        if d < 0:
            raise ValueError(f"negative out-degree at position {i}")
        open_nodes += d - 1
        if open_nodes < 0 or (open_nodes == 0 and i != len(degrees) - 1):
            raise ValueError("degree sequence is not a valid preorder encoding")
    if open_nodes != 0:
        raise ValueError("degree sequence is truncated")


class PlaneTree:
    """A finite plane tree as an immutable preorder out-degree sequence."""

    __slots__ = ("degrees", "_depths")

    def __init__(self, degrees: Iterable[int]):
        degs = tuple(int(d) for d in degrees)
        if not degs:
            raise ValueError("a tree has at least its root")
        _validate_degrees(degs)
        object.__setattr__(self, "degrees", degs)
        object.__setattr__(self, "_depths", None)

    def __setattr__(self, name, value):  # immutability
        raise AttributeError("PlaneTree is immutable")

    # -- basic structure ---------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.degrees)

    @property
    def depths(self) -> tuple[int, ...]:
        """Depth of each node, in preorder."""
        cached = self._depths
        if cached is None:
            cached = _preorder_depths(self.degrees)
            object.__setattr__(self, "_depths", cached)
        return cached

    @property
    def height(self) -> int:
        return max(self.depths)

    def subtree_end(self, i: int) -> int:
        """Index one past the preorder slice of node ``i``'s subtree."""
        open_nodes = 1
        j = i
        while open_nodes > 0:
            open_nodes += self.degrees[j] - 1
            j += 1
        return j

    def labels(self) -> tuple[tuple[int, ...], ...]:
        """Ulam-Harris labels of the nodes, in preorder."""
        out: list[tuple[int, ...]] = []
        stack: list[list[int]] = []
        label: tuple[int, ...] = ()
        for d in self.degrees:
            out.append(label)
            if d > 0:
                stack.append([d, 1])
                label = label + (1,)
            else:
                while stack:
                    stack[-1][0] -= 1
                    if stack[-1][0] == 0:
                        stack.pop()
                        label = label[:-1]
                    else:
                        stack[-1][1] += 1
                        label = label[:-1] + (stack[-1][1],)
                        break
                else:
                    label = ()
        return tuple(out)

    # -- serialization -----------------------------------------------------

    def to_string(self) -> str:
        return " ".join(str(d) for d in self.degrees)

    @classmethod
    def from_string(cls, text: str) -> "PlaneTree":
        return cls(int(tok) for tok in text.split())

    # -- dunder ------------------------------------------------------------

    def __eq__(self, other) -> bool:
        return isinstance(other, PlaneTree) and self.degrees == other.degrees

    def __hash__(self) -> int:
        return hash(self.degrees)

    def __len__(self) -> int:
        return len(self.degrees)

    def __repr__(self) -> str:
        return f"PlaneTree({self.to_string()!r})"


SINGLETON = PlaneTree((0,))


def _preorder_depths(degrees: tuple[int, ...]) -> tuple[int, ...]:
    depths = []
    stack: list[int] = []
    depth = 0
    for d in degrees:
        depths.append(depth)
        if d > 0:
            stack.append(d)
            depth += 1
        else:
            while stack:
                stack[-1] -= 1
                if stack[-1] == 0:
                    stack.pop()
                    depth -= 1
                else:
                    break
    return tuple(depths)


@dataclass(frozen=True, init=False)
class Forest:
    """An ordered finite sequence of plane trees; all roots sit at height 0."""

    trees: tuple[PlaneTree, ...]

    def __init__(self, trees: Iterable[PlaneTree]):
        object.__setattr__(self, "trees", tuple(trees))

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self) -> Iterator[PlaneTree]:
        return iter(self.trees)

    @property
    def n_nodes(self) -> int:
        return sum(t.n_nodes for t in self.trees)


# -- degree sets (finite or cofinite, so membership in Z+ stays decidable) --


@dataclass(frozen=True)
class DegreeSet:
    members: frozenset[int]
    complement: bool = False

    def __contains__(self, k: int) -> bool:
        return (k in self.members) != self.complement

    @classmethod
    def of(cls, *ks: int) -> "DegreeSet":
        return cls(frozenset(ks))

    @classmethod
    def excluding(cls, *ks: int) -> "DegreeSet":
        return cls(frozenset(ks), complement=True)

    def describe(self) -> str:
        body = "{" + ",".join(str(k) for k in sorted(self.members)) + "}"
        return f"Z+\\{body}" if self.complement else body


ALL_DEGREES = DegreeSet(frozenset(), complement=True)
LEAVES = DegreeSet.of(0)


# -- functionals ------------------------------------------------------------


@dataclass(frozen=True)
class Functional:
    """A nonnegative integer functional of trees and forests.

    ``kind`` is one of ``height``, ``width``, ``maxdeg``, ``count``; the
    ``count`` kind carries the degree set it counts.  Total progeny is the
    count over all of Z+.
    """

    kind: str
    degree_set: DegreeSet | None = None

    def __post_init__(self):
        if self.kind not in ("height", "width", "maxdeg", "count"):
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if (self.kind == "count") != (self.degree_set is not None):
            raise ValueError("count functionals (only) carry a degree set")

    @property
    def name(self) -> str:
        if self.kind != "count":
            return self.kind
        if self.degree_set == ALL_DEGREES:
            return "progeny"
        return f"count{self.degree_set.describe()}"

    def value(self, tree: PlaneTree) -> int:
        if self.kind == "height":
            return tree.height
        if self.kind == "width":
            return max(_generation_sizes(tree))
        if self.kind == "maxdeg":
            return max(tree.degrees)
        return sum(1 for d in tree.degrees if d in self.degree_set)

    def forest_value(self, forest: Forest) -> int:
        if len(forest) == 0:
            # degenerate input: sup over no generations
            return 0
        if self.kind in ("height", "maxdeg"):
            return max(self.value(t) for t in forest)
        if self.kind == "width":
            per_tree = [_generation_sizes(t) for t in forest]
            top = max(len(g) for g in per_tree)
            return max(
                sum(g[h] for g in per_tree if h < len(g)) for h in range(top)
            )
        return sum(self.value(t) for t in forest)

    def describe(self) -> str:
        return self.name


HEIGHT = Functional("height")
WIDTH = Functional("width")
MAX_OUT_DEGREE = Functional("maxdeg")
TOTAL_PROGENY = Functional("count", ALL_DEGREES)


def count_in_set(degree_set: DegreeSet) -> Functional:
    return Functional("count", degree_set)


def _generation_sizes(tree: PlaneTree) -> list[int]:
    sizes = [0] * (tree.height + 1)
    for dep in tree.depths:
        sizes[dep] += 1
    return sizes


# -- level operations --------------------------------------------------------


def generation_size(tree: PlaneTree, h: int) -> int:
    """Number of nodes of ``tree`` at height ``h`` (1 at h=0, 0 above top)."""
    if h < 0:
        raise ValueError("height must be nonnegative")
    return sum(1 for dep in tree.depths if dep == h)


def restrict(tree: PlaneTree, h: int) -> PlaneTree:
    """The subtree of all nodes at height <= h; idempotent in h."""
    if h < 0:
        raise ValueError("height must be nonnegative")
    if tree.height <= h:
        return tree
    out: list[int] = []
    depths = tree.depths
    i = 0
    n = len(tree.degrees)
    while i < n:
        if depths[i] < h:
            out.append(tree.degrees[i])
            i += 1
        else:
            out.append(0)
            i = tree.subtree_end(i)
    return PlaneTree(out)


def subtrees_above(tree: PlaneTree, b: int) -> Forest:
    """The forest of subtrees rooted at the height-``b`` nodes of ``tree``.

    Components come in the left-to-right (preorder) order of their roots,
    each relabelled so its own root is at height 0.
    """
    if b < 1:
        raise ValueError("level must be >= 1")
    depths = tree.depths
    comps = []
    i = 0
    n = len(tree.degrees)
    while i < n:
        if depths[i] == b:
            j = tree.subtree_end(i)
            comps.append(PlaneTree(tree.degrees[i:j]))
            i = j
        else:
            i += 1
    return Forest(comps)


def ultrametric_distance(t: PlaneTree, s: PlaneTree) -> float:
    """2^{-sup{h : the height-h restrictions agree}}; 0 iff the trees are equal."""
    if t == s:
        return 0.0
    h = 0
    while restrict(t, h) == restrict(s, h):
        h += 1
    # restrictions first differ at h, so the sup above is h - 1
    return 2.0 ** (-(h - 1))
