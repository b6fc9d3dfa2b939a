"""Random generation of trees, forests, immortal prefixes, and
conditioned trees by rejection.

All samplers are deterministic functions of their :class:`~branchlab.rng.RngStream`;
batch engines grow whole populations level-by-level with vectorized draws and
identify a height-b restriction by its breadth-first degree sequence, which
encodes a plane tree uniquely.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .exact import TailTable, Conditioning, tail_table, ZeroProbabilityEvent
from .offspring import OffspringDist
from .rng import RngStream
from .trees import Forest, Functional, PlaneTree

__all__ = [
    "Overflow",
    "BudgetExhausted",
    "SamplerBudget",
    "sample_gw",
    "sample_forest",
    "sample_immortal_prefix",
    "sample_conditioned",
    "immortal_prefix_counts",
    "condensation_prefix_counts",
    "gw_batch",
    "conditioned_prefix_counts",
    "counts_to_prefix_law",
    "bfs_to_preorder",
]

DEFAULT_NODE_CAP = 10**7


@dataclass(frozen=True)
class Overflow:
    """Returned (not raised) when a growing tree exceeds its node cap."""

    nodes_generated: int


@dataclass(frozen=True)
class BudgetExhausted:
    """Returned when rejection sampling runs out of attempts or nodes."""

    attempts: int
    accepted: int
    reason: str
    acceptance_rate: float = 0.0


@dataclass
class SamplerBudget:
    max_attempts: int = 10**6
    node_cap: int = DEFAULT_NODE_CAP
    max_total_nodes: int = 10**9


def _cdf(p: OffspringDist) -> np.ndarray:
    return np.cumsum(p.pmf)


def _draw(gen: np.random.Generator, cdf: np.ndarray, size: int) -> np.ndarray:
    if size == 0:
        return np.empty(0, dtype=np.int64)
    u = gen.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, cdf.size - 1)  # guard the float top of the cdf


# ---------------------------------------------------------------------------
# single-tree samplers
# ---------------------------------------------------------------------------


def sample_gw(
    p: OffspringDist, rng: RngStream, node_cap: int = DEFAULT_NODE_CAP
) -> PlaneTree | Overflow:
    """One tree, grown generation by generation with i.i.d. offspring."""
    gen = rng.generator()
    cdf = _cdf(p)
    levels: list[np.ndarray] = []
    current = 1
    total = 0
    while current > 0:
        degs = _draw(gen, cdf, current)
        total += current
        if total > node_cap:
            return Overflow(total)
        levels.append(degs)
        current = int(degs.sum())
    return _levels_to_tree(levels)


def _levels_to_tree(levels: list[np.ndarray]) -> PlaneTree:
    cursors = [0] * len(levels)
    out: list[int] = []
    stack: list[list[int]] = [[0, 1]]  # pairs [level, children left to emit]
    while stack:
        level, left = stack[-1]
        if left == 0:
            stack.pop()
            continue
        stack[-1][1] = left - 1
        d = int(levels[level][cursors[level]])
        cursors[level] += 1
        out.append(d)
        if d:
            stack.append([level + 1, d])
    return PlaneTree(out)


def bfs_to_preorder(flat: np.ndarray | tuple) -> PlaneTree:
    """Decode a breadth-first degree sequence (levels concatenated).

    A sequence covering only levels 0..b-1 decodes to the height-b
    restriction: nodes implied by the last recorded level are leaves.
    """
    flat = np.asarray(flat, dtype=np.int64)
    if flat.size == 0:
        return PlaneTree((0,))
    levels = []
    pos = 0
    size = 1
    while size > 0 and pos < flat.size:
        if pos + size > flat.size:
            raise ValueError("breadth-first sequence is truncated mid-level")
        level = flat[pos : pos + size]
        levels.append(level)
        pos += size
        size = int(level.sum())
    if pos != flat.size:
        raise ValueError("breadth-first sequence has trailing nodes")
    if size > 0:
        levels.append(np.zeros(size, dtype=np.int64))
    return _levels_to_tree(levels)


def sample_forest(
    p: OffspringDist, k: int, rng: RngStream, node_cap: int = DEFAULT_NODE_CAP
) -> Forest | Overflow:
    """k independent trees; the cap applies to the total node count."""
    if k < 1:
        raise ValueError("k must be >= 1")
    trees = []
    remaining = node_cap
    for i in range(k):
        t = sample_gw(p, rng.child(i), remaining)
        if isinstance(t, Overflow):
            return Overflow(node_cap - remaining + t.nodes_generated)
        trees.append(t)
        remaining -= t.n_nodes
    return Forest(trees)


def sample_immortal_prefix(p: OffspringDist, rng: RngStream, b: int) -> PlaneTree:
    """The height-b restriction of the immortal tree, by the spine construction."""
    if p.classify() == "supercritical":
        raise ValueError("immortal trees require a critical or subcritical law")
    counts = immortal_prefix_counts(p, rng, b, 1)
    (tree,) = counts
    return tree


def sample_conditioned(
    p: OffspringDist,
    functional: Functional,
    cond: Conditioning,
    rng: RngStream,
    budget: SamplerBudget | None = None,
    *,
    table: TailTable | None = None,
) -> PlaneTree | BudgetExhausted:
    """Rejection sampling of the tree law given the conditioning event.

    A point conditioning with zero exact mass is detected from the exact
    engine before any sampling and returned as an exhausted budget.
    """
    budget = budget or SamplerBudget()
    if cond.kind == "point":
        try:
            tbl = table if table is not None else tail_table(p, functional, max(cond.n, 1))
            if tbl.point_mass(cond.n) <= 0.0:
                return BudgetExhausted(0, 0, "zero_probability")
        except ZeroProbabilityEvent:
            return BudgetExhausted(0, 0, "zero_probability")
    nodes_used = 0
    for attempt in range(budget.max_attempts):
        t = sample_gw(p, rng.child(attempt), budget.node_cap)
        if isinstance(t, Overflow):
            nodes_used += t.nodes_generated
        else:
            nodes_used += t.n_nodes
            if cond.holds(functional.value(t)):
                return t
        if nodes_used > budget.max_total_nodes:
            return BudgetExhausted(attempt + 1, 0, "node_budget")
    return BudgetExhausted(budget.max_attempts, 0, "attempt_budget")


# ---------------------------------------------------------------------------
# batched spine construction (immortal and capped-spine variants)
# ---------------------------------------------------------------------------


def immortal_prefix_counts(
    p: OffspringDist, rng: RngStream, b: int, n: int
) -> Counter[PlaneTree]:
    """Counts of n sampled height-b immortal-tree restrictions."""
    return _spine_prefix_counts(p, rng, b, n, spine_len=None)


def condensation_prefix_counts(
    p: OffspringDist, rng: RngStream, b: int, n: int
) -> Counter[PlaneTree]:
    """Spine-capped variant: the spine runs a geometric(mu) number of levels.

    P[cap = j] = mu^j (1 - mu); below the cap the construction is the
    immortal one, and the node at the cap level reverts to a plain node.
    This is the discrete stand-in for an exponentially capped spine.
    """
    mu = p.mean
    if not mu < 1.0:
        raise ValueError("the capped-spine variant is for subcritical laws")
    gen = rng.child(0).generator()
    caps = gen.geometric(1.0 - mu, size=n) - 1  # support {0, 1, ...}
    return _spine_prefix_counts(p, rng, b, n, spine_len=caps)


def _spine_prefix_counts(
    p: OffspringDist,
    rng: RngStream,
    b: int,
    n: int,
    spine_len: np.ndarray | None,
) -> Counter[PlaneTree]:
    if b < 0:
        raise ValueError("prefix height must be >= 0")
    if b == 0 or n == 0:
        counts: Counter = Counter()
        if n:
            counts[PlaneTree((0,))] = n
        return counts
    gen = rng.child(1).generator()
    cdf = _cdf(p)
    cdf_hat = _cdf(p.size_biased())
    if spine_len is None:
        spine_len = np.full(n, b, dtype=np.int64)
    else:
        spine_len = np.minimum(np.asarray(spine_len, dtype=np.int64), b)

    sizes = np.ones(n, dtype=np.int64)  # nodes per sample at current level
    special_idx = np.where(spine_len > 0, 0, -1)  # BFS slot of the spine node
    level_flat: list[np.ndarray] = []
    level_starts: list[np.ndarray] = []
    level_sizes: list[np.ndarray] = []

    for level in range(b):
        starts = np.concatenate(([0], np.cumsum(sizes[:-1])))
        total = int(sizes.sum())
        has_special = special_idx >= 0
        n_special = int(has_special.sum())
        flat = np.empty(total, dtype=np.int64)
        special_pos = (starts + special_idx)[has_special]
        deg_special = _draw(gen, cdf_hat, n_special)
        deg_normal = _draw(gen, cdf, total - n_special)
        mask = np.ones(total, dtype=bool)
        mask[special_pos] = False
        flat[mask] = deg_normal
        flat[special_pos] = deg_special

        level_flat.append(flat)
        level_starts.append(starts)
        level_sizes.append(sizes)

        csum = np.concatenate(([0], np.cumsum(flat)))
        new_sizes = csum[starts + sizes] - csum[starts]
        # place the next spine node among the special node's children
        new_special = np.full(n, -1, dtype=np.int64)
        cont = has_special & (spine_len > level + 1)
        if cont.any():
            before = csum[(starts + special_idx)[cont]] - csum[starts[cont]]
            u = gen.random(int(cont.sum()))
            child = (u * deg_special[cont[has_special]]).astype(np.int64)
            new_special[cont] = before + child
        sizes = new_sizes
        special_idx = new_special

    return _assemble_keys(level_flat, level_starts, level_sizes, n)


def _assemble_keys(
    level_flat: list[np.ndarray],
    level_starts: list[np.ndarray],
    level_sizes: list[np.ndarray],
    n: int,
) -> Counter[PlaneTree]:
    """Concatenate per-level degree blocks into one BFS key per sample."""
    total_per_sample = np.zeros(n, dtype=np.int64)
    for sizes in level_sizes:
        total_per_sample += sizes
    out_starts = np.concatenate(([0], np.cumsum(total_per_sample[:-1])))
    out = np.empty(int(total_per_sample.sum()), dtype=np.uint32)
    pre = np.zeros(n, dtype=np.int64)
    for flat, starts, sizes in zip(level_flat, level_starts, level_sizes):
        if flat.size == 0:
            continue
        within = np.arange(flat.size, dtype=np.int64) - np.repeat(starts, sizes)
        dest = np.repeat(out_starts + pre, sizes) + within
        out[dest] = flat
        pre += sizes
    bounds = np.concatenate((out_starts, [out.size]))
    raw = out.tobytes()
    counts: Counter[bytes] = Counter(
        raw[4 * bounds[i] : 4 * bounds[i + 1]] for i in range(n)
    )
    result: Counter[PlaneTree] = Counter()
    for key, c in counts.items():
        flat_degs = np.frombuffer(key, dtype=np.uint32).astype(np.int64)
        result[bfs_to_preorder(flat_degs)] = c
    return result


# ---------------------------------------------------------------------------
# batched plain-tree engine
# ---------------------------------------------------------------------------


@dataclass
class GWBatch:
    """Level-computed statistics for a batch of independent trees.

    Trees that hit the node cap have ``overflow`` set; their statistics are
    the values accumulated up to the cap and are lower bounds.
    """

    n: int
    height: np.ndarray
    width: np.ndarray
    maxdeg: np.ndarray
    progeny: np.ndarray
    count: np.ndarray | None
    overflow: np.ndarray
    prefix_keys: list[bytes] | None = None

    def functional_values(self, functional: Functional) -> np.ndarray:
        if functional.kind == "height":
            return self.height
        if functional.kind == "width":
            return self.width
        if functional.kind == "maxdeg":
            return self.maxdeg
        from .trees import ALL_DEGREES

        if functional.degree_set == ALL_DEGREES:
            return self.progeny
        if self.count is None:
            raise ValueError("batch was not grown with this count functional")
        return self.count


def gw_batch(
    p: OffspringDist,
    rng: RngStream,
    n: int,
    *,
    node_cap: int = DEFAULT_NODE_CAP,
    prefix_height: int | None = None,
    count_set=None,
) -> GWBatch:
    """Grow n independent trees level-by-level, recording functionals.

    ``prefix_height`` b asks for the BFS key of each tree's height-b
    restriction (levels 0..b-1 suffice to identify it).
    """
    gen = rng.generator()
    cdf = _cdf(p)
    in_set = None
    if count_set is not None:
        in_set = np.array(
            [1 if k in count_set else 0 for k in range(p.pmf.size)], dtype=np.int64
        )

    height = np.zeros(n, dtype=np.int64)
    width = np.ones(n, dtype=np.int64)
    maxdeg = np.zeros(n, dtype=np.int64)
    progeny = np.ones(n, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64) if in_set is not None else None
    overflow = np.zeros(n, dtype=bool)

    alive = np.arange(n)  # original tree ids, aligned with ``sizes``
    sizes = np.ones(n, dtype=np.int64)

    collect = prefix_height is not None and prefix_height > 0
    key_parts: list[list[np.ndarray]] | None = [[] for _ in range(n)] if collect else None

    level = 0
    while alive.size:
        starts = np.concatenate(([0], np.cumsum(sizes[:-1])))
        flat = _draw(gen, cdf, int(sizes.sum()))
        csum = np.concatenate(([0], np.cumsum(flat)))
        child_counts = csum[starts + sizes] - csum[starts]

        if collect and level < prefix_height:
            for j, idx in enumerate(alive):
                key_parts[idx].append(flat[starts[j] : starts[j] + sizes[j]])

        seg_max = np.maximum.reduceat(flat, starts)
        maxdeg[alive] = np.maximum(maxdeg[alive], seg_max)
        if in_set is not None:
            hsum = np.concatenate(([0], np.cumsum(in_set[flat])))
            count[alive] += hsum[starts + sizes] - hsum[starts]

        progeny[alive] += child_counts
        over = progeny[alive] > node_cap
        if over.any():
            overflow[alive[over]] = True
        width[alive] = np.maximum(width[alive], child_counts)
        grows = (child_counts > 0) & ~over
        height[alive[grows]] = level + 1
        alive = alive[grows]
        sizes = child_counts[grows]
        level += 1

    keys = None
    if collect:
        keys = []
        for parts in key_parts:
            if parts:
                flat_key = np.concatenate(parts).astype(np.uint32)
            else:
                flat_key = np.zeros(0, dtype=np.uint32)
            keys.append(flat_key.tobytes())
    return GWBatch(n, height, width, maxdeg, progeny, count, overflow, keys)


def conditioned_prefix_counts(
    p: OffspringDist,
    functional: Functional,
    cond: Conditioning,
    b: int,
    rng: RngStream,
    n_target: int,
    *,
    budget: SamplerBudget | None = None,
    wave: int = 20000,
) -> tuple[Counter[PlaneTree], dict]:
    """Rejection-sample trees, returning prefix counts of accepted ones.

    Overflowed trees cannot be classified and are counted separately; for the
    tail conditionings of monotone functionals an overflowed tree whose
    partial value already exceeds n is accepted (the true value is larger).
    """
    budget = budget or SamplerBudget()
    accepted: Counter[bytes] = Counter()
    n_acc = 0
    attempts = 0
    unresolved = 0
    wave_id = 0
    while n_acc < n_target and attempts < budget.max_attempts:
        m = min(wave, budget.max_attempts - attempts)
        batch = gw_batch(
            p,
            rng.child(wave_id),
            m,
            node_cap=budget.node_cap,
            prefix_height=b,
            count_set=functional.degree_set if functional.kind == "count" else None,
        )
        wave_id += 1
        attempts += m
        values = batch.functional_values(functional)
        if cond.kind == "tail":
            # partial values of overflowed trees are lower bounds, so
            # exceedance is settled; the rest stay unresolved
            ok = values > cond.n
            unresolved += int((batch.overflow & ~ok).sum())
        else:
            ok = (values == cond.n) & ~batch.overflow
            unresolved += int(batch.overflow.sum())
        for i in np.nonzero(ok)[0]:
            accepted[batch.prefix_keys[i]] += 1
            n_acc += 1
    info = {
        "attempts": attempts,
        "accepted": n_acc,
        "acceptance_rate": n_acc / attempts if attempts else 0.0,
        "overflow_unresolved": unresolved,
        "budget_exhausted": n_acc < n_target,
    }
    result: Counter[PlaneTree] = Counter()
    for key, c in accepted.items():
        flat = np.frombuffer(key, dtype=np.uint32).astype(np.int64)
        result[bfs_to_preorder(flat)] = c
    return result, info


def counts_to_prefix_law(counts: Counter[PlaneTree], b: int):
    """Empirical prefix law (zero deficiency: every sample is tabulated)."""
    from .exact import PrefixLaw

    total = sum(counts.values())
    if total == 0:
        raise ValueError("no samples")
    probs = {t: c / total for t, c in counts.items()}
    return PrefixLaw(b, probs, 0.0, {"samples": total, "mc": True})
