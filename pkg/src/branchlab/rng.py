"""Deterministic, splittable random streams.

Every sampler in this package draws from an :class:`RngStream`, which names a
stream by ``(seed, path)`` where ``path`` is a tuple of child indices.  The
underlying bit generator is Philox, a counter-based generator, so a stream's
output is a pure function of its key: replicas simulated in parallel, in any
order, on any worker count, produce identical results.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    """One step of the splitmix64 output function (used for key derivation)."""
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix(a: int, b: int) -> int:
    return splitmix64(a ^ splitmix64(b ^ _GOLDEN))


class RngStream:
    """A named position in a tree of independent random streams.

    ``child(i)`` derives a sub-stream; distinct paths map to distinct Philox
    keys, which are statistically independent by construction of the
    counter-based generator.
    """

    __slots__ = ("seed", "path", "_key")

    def __init__(self, seed: int, path: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.path = tuple(int(i) for i in path)
        key = splitmix64(self.seed)
        for index in self.path:
            key = _mix(key, index & _MASK64)
        self._key = key

    def child(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        """A fresh numpy Generator positioned at the start of this stream."""
        key = np.array([self._key, splitmix64(self._key)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, path={self.path})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RngStream)
            and self.seed == other.seed
            and self.path == other.path
        )

    def __hash__(self) -> int:
        return hash((self.seed, self.path))


class BufferedDraws:
    """Cheap scalar draws on top of a Generator, refilled in blocks.

    Used by tree growers that consume single pmf samples and uniforms at a
    high rate; block refills keep the cost per draw close to a numpy index.
    """

    def __init__(self, gen: np.random.Generator, block: int = 1 << 16):
        self._gen = gen
        self._block = block
        self._uni = gen.random(block)
        self._ui = 0

    def uniform(self) -> float:
        if self._ui >= self._block:
            self._uni = self._gen.random(self._block)
            self._ui = 0
        u = self._uni[self._ui]
        self._ui += 1
        return float(u)
