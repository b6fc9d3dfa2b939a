"""Exact laws of tree functionals under a branching law.

Conventions used throughout, for a functional A of the random tree tau and
the forest tau^(k) of k independent copies:

    v[n]        = P[A(tau) > n]          (tail sequence)
    point[n]    = P[A(tau) = n]          (point masses; point[0] = 1 - v[0])
    forest variants are the same quantities for tau^(k).

Height tails come from iterating the offspring pgf; maximal out-degree tails
from the least fixed point of the degree-truncated pgf; total progeny from
the cycle-lemma (Dwass) formula via n-fold pmf convolutions; width from the
absorption probability of the population chain killed above the threshold;
and counts of out-degrees in a set from a truncated-power-series fixed point
of the tree equation for E[x^{L_A}].

Everything here is deterministic; Monte Carlo lives in ``samplers``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .offspring import OffspringDist
from .trees import (
    ALL_DEGREES,
    DegreeSet,
    Functional,
    PlaneTree,
    generation_size,
)

__all__ = [
    "TailTable",
    "PrefixLaw",
    "Conditioning",
    "Tail",
    "Point",
    "height_tail",
    "maxdeg_tail",
    "progeny_pmf",
    "width_cdf",
    "width_cdf_vector",
    "count_in_set_pmf",
    "tail_table",
    "prefix_prob",
    "spine_prefix_prob",
    "immortal_prefix_law",
    "conditioned_prefix_law",
    "tv_distance",
    "enumerate_trees",
    "least_fixed_point",
    "EnumerationBudgetError",
    "ConvergenceError",
    "ZeroProbabilityEvent",
]

FIXED_POINT_TOL = 1e-14
FIXED_POINT_MAX_ITER = 10**7
SERIES_MAX_ITER = 5000
DEFICIENCY_FLAG = 1e-6
DEFAULT_ENUM_BUDGET = 2_000_000


class EnumerationBudgetError(RuntimeError):
    """Raised when a brute-force enumeration exceeds its tree budget."""


class ConvergenceError(RuntimeError):
    """Raised when a fixed-point computation fails to stabilize in budget."""


class ZeroProbabilityEvent(ValueError):
    """Raised when a conditioning event has zero exact probability."""


# ---------------------------------------------------------------------------
# conditionings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Conditioning:
    kind: str  # "tail" for {A > n}, "point" for {A = n}
    n: int

    def __post_init__(self):
        if self.kind not in ("tail", "point"):
            raise ValueError(f"unknown conditioning kind {self.kind!r}")
        if self.n < 0:
            raise ValueError("conditioning threshold must be nonnegative")

    def holds(self, value: int) -> bool:
        return value > self.n if self.kind == "tail" else value == self.n

    def describe(self) -> str:
        return f"A>{self.n}" if self.kind == "tail" else f"A={self.n}"


def Tail(n: int) -> Conditioning:
    return Conditioning("tail", n)


def Point(n: int) -> Conditioning:
    return Conditioning("point", n)


# ---------------------------------------------------------------------------
# tail tables
# ---------------------------------------------------------------------------


class TailTable:
    """Tail/point values of a functional, with forest variants on demand."""

    def __init__(
        self,
        dist: OffspringDist,
        functional: Functional,
        v: np.ndarray,
        meta: dict | None = None,
    ):
        self.dist = dist
        self.functional = functional
        self.v = np.asarray(v, dtype=float)
        self.N = self.v.size - 1
        self.meta = dict(meta or {})

    # -- single-tree values -------------------------------------------------

    def tail(self, n: int) -> float:
        """P[A(tau) > n]; equals 1 for n < 0."""
        if n < 0:
            return 1.0
        if n > self.N:
            raise IndexError(f"tail table built to N={self.N}, asked n={n}")
        return float(self.v[n])

    def point_mass(self, n: int) -> float:
        """P[A(tau) = n]; zero for n < 0."""
        if n < 0:
            return 0.0
        return self.tail(n - 1) - self.tail(n)

    def points(self) -> np.ndarray:
        out = np.empty(self.N + 1)
        out[0] = 1.0 - self.v[0]
        out[1:] = self.v[:-1] - self.v[1:]
        return out

    def support_lattice(self) -> list[int]:
        """n with P[A = n] > 0, up to the table horizon."""
        pts = self.points()
        return [n for n in range(self.N + 1) if pts[n] > 0.0]

    # -- forest values --------------------------------------------------------

    def forest_tail(self, k: int, n: int) -> float:
        raise NotImplementedError

    def forest_point(self, k: int, n: int) -> float:
        raise NotImplementedError


class MaxTailTable(TailTable):
    """Forest law of a max-type functional: the forest value is the max of
    the component values, so forest cdfs are k-th powers of the tree cdf."""

    def forest_tail(self, k: int, n: int) -> float:
        if k == 0:
            return 0.0
        if n < 0:
            return 1.0
        return 1.0 - (1.0 - self.tail(n)) ** k

    def forest_point(self, k: int, n: int) -> float:
        if k == 0 or n < 0:
            return 1.0 if (k == 0 and n == 0) else 0.0
        below = 1.0 - self.tail(n - 1)  # P[A < n] ... = P[A <= n-1]
        at_or_below = 1.0 - self.tail(n)
        return at_or_below**k - below**k

    def forest_point_binomial(self, k: int, n: int) -> float:
        """Same mass via the binomial expansion over which components hit n.

        Algebraically identical to ``forest_point``; kept as a cross-check
        route.
        """
        if k == 0 or n < 0:
            return 1.0 if (k == 0 and n == 0) else 0.0
        pn = self.point_mass(n)
        below = 1.0 - self.tail(n - 1)
        total = 0.0
        for j in range(1, k + 1):
            total += math.comb(k, j) * pn**j * below ** (k - j)
        return total


class SumTailTable(TailTable):
    """Forest law of an additive functional (progeny, degree counts)."""

    def __init__(self, dist, functional, point_1: np.ndarray, meta=None):
        point_1 = np.asarray(point_1, dtype=float)
        v = 1.0 - np.cumsum(point_1)
        super().__init__(dist, functional, v, meta)
        self._forest_points: dict[int, np.ndarray] = {1: point_1}

    def _forest_point_array(self, k: int) -> np.ndarray:
        raise NotImplementedError

    def forest_points(self, k: int) -> np.ndarray:
        if k not in self._forest_points:
            self._forest_points[k] = self._forest_point_array(k)
        return self._forest_points[k]

    def forest_tail(self, k: int, n: int) -> float:
        if k == 0:
            return 0.0
        if n < 0:
            return 1.0
        if n > self.N:
            raise IndexError(f"tail table built to N={self.N}, asked n={n}")
        return float(1.0 - np.sum(self.forest_points(k)[: n + 1]))

    def forest_point(self, k: int, n: int) -> float:
        if k == 0:
            return 1.0 if n == 0 else 0.0
        if n < 0:
            return 0.0
        if n > self.N:
            raise IndexError(f"tail table built to N={self.N}, asked n={n}")
        return float(self.forest_points(k)[n])


class ProgenyTailTable(SumTailTable):
    """Total-progeny law via the Dwass formula.

    P[L(tau^(k)) = n] = (k/n) P[S_n = n-k] with S_n a sum of n offspring
    draws; the stored per-n convolution powers serve every k.
    """

    def __init__(self, dist, functional, convs: list[np.ndarray], meta=None):
        self._convs = convs  # convs[n] = pmf of S_n, truncated to table size
        N = len(convs) - 1
        point_1 = np.zeros(N + 1)
        for n in range(1, N + 1):
            sn = convs[n]
            if n - 1 < sn.size:
                point_1[n] = sn[n - 1] / n
        super().__init__(dist, functional, point_1, meta)

    def _forest_point_array(self, k: int) -> np.ndarray:
        out = np.zeros(self.N + 1)
        for n in range(k, self.N + 1):
            sn = self._convs[n]
            if 0 <= n - k < sn.size:
                out[n] = k * sn[n - k] / n
        return out


class CountTailTable(SumTailTable):
    """Count-in-set law from the generating-series fixed point."""

    def __init__(self, dist, functional, series: np.ndarray, meta=None):
        super().__init__(dist, functional, series, meta)

    def _forest_point_array(self, k: int) -> np.ndarray:
        base = self.forest_points(1)
        out = np.zeros(self.N + 1)
        out[0] = 1.0
        for _ in range(k):
            out = np.convolve(out, base)[: self.N + 1]
        return out


class WidthTailTable(TailTable):
    """Width law; forest values read off the killed-chain absorption vectors.

    ``cdf_vectors[n][k] = P[W(tau^(k)) <= n]`` for 0 <= k <= n (zero beyond,
    because the forest already has k roots at generation zero).
    """

    def __init__(self, dist, functional, cdf_vectors: dict[int, np.ndarray], meta=None):
        self._cdf = cdf_vectors
        N = max(cdf_vectors)
        v = np.empty(N + 1)
        for n in range(N + 1):
            v[n] = 1.0 - self._cdf_at(1, n)
        super().__init__(dist, functional, v, meta)

    def _cdf_at(self, k: int, n: int) -> float:
        if k == 0:
            return 1.0
        if n < 0 or k > n:
            return 0.0
        vec = self._cdf[n]
        return float(vec[k])

    def forest_tail(self, k: int, n: int) -> float:
        if k == 0:
            return 0.0
        if n < 0:
            return 1.0
        return 1.0 - self._cdf_at(k, n)

    def forest_point(self, k: int, n: int) -> float:
        if k == 0:
            return 1.0 if n == 0 else 0.0
        return self._cdf_at(k, n) - self._cdf_at(k, n - 1)


# ---------------------------------------------------------------------------
# table constructors
# ---------------------------------------------------------------------------


def height_tail(p: OffspringDist, N: int) -> MaxTailTable:
    """v[n] = P[H(tau) > n] = 1 - q_{n+1}, q_0 = 0, q_{m+1} = pgf(q_m)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    q = 0.0
    v = np.empty(N + 1)
    for n in range(N + 1):
        q = p.pgf(q)
        v[n] = 1.0 - q
    from .trees import HEIGHT

    return MaxTailTable(p, HEIGHT, v)


def least_fixed_point(
    coef: np.ndarray,
    *,
    tol: float = FIXED_POINT_TOL,
    method: str = "newton",
    max_iter: int = FIXED_POINT_MAX_ITER,
) -> float:
    """Least s in [0, 1] with T(s) = s, where T(s) = sum_k coef[k] s^k.

    ``coef`` is a (possibly defective) pmf.  Plain iteration from 0 converges
    monotonically to the least fixed point but needs ~1/defect steps near a
    full-mass critical pgf; Newton from 0 follows the same monotone path
    (tangents of the convex map T(s) - s from a subsolution stay below the
    least root) at quadratic speed, so it is the default.
    """
    coef = np.asarray(coef, dtype=float)
    defect = 1.0 - float(coef.sum())
    mean = float(np.arange(coef.size) @ coef)
    if defect <= 1e-15 and mean <= 1.0 + 1e-12:
        return 1.0  # full-mass (sub)critical pgf: extinction is certain
    polyval = np.polynomial.polynomial.polyval
    if method == "newton":
        dcoef = np.arange(1, coef.size) * coef[1:]
        s = 0.0
        for _ in range(200):
            f = float(polyval(s, coef)) - s
            if f <= 1e-16:
                return s
            fp = float(polyval(s, dcoef)) - 1.0 if coef.size > 1 else -1.0
            step = -f / fp
            if step <= 0:
                return s
            s = min(1.0, s + step)
        return s
    if method == "iteration":
        s = 0.0
        for _ in range(max_iter):
            nxt = float(polyval(s, coef))
            if abs(nxt - s) < tol:
                return nxt
            s = nxt
        raise ConvergenceError(
            f"fixed-point iteration did not reach tol={tol} in {max_iter} steps"
        )
    raise ValueError(f"unknown method {method!r}")


def maxdeg_tail(p: OffspringDist, N: int, *, method: str = "newton") -> MaxTailTable:
    """v[n] = P[M(tau) > n] = 1 - (least fixed point of the degree-<=n pgf)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    v = np.empty(N + 1)
    for n in range(N + 1):
        coef = p.pmf[: n + 1]
        v[n] = 1.0 - least_fixed_point(coef, method=method)
    from .trees import MAX_OUT_DEGREE

    return MaxTailTable(p, MAX_OUT_DEGREE, v)


# convolution budget guard: entries of the n-fold pmf ladder
PROGENY_BUDGET = 50_000_000


def progeny_pmf(p: OffspringDist, k: int = 1, N: int = 64) -> ProgenyTailTable:
    """Progeny table to horizon N, with the forest variant for ``k`` built."""
    if not 1 <= k <= N:
        raise ValueError("need 1 <= k <= N")
    if (N + 1) * (N + p.max_degree) > PROGENY_BUDGET:
        raise EnumerationBudgetError("progeny convolution ladder over budget")
    convs: list[np.ndarray] = [np.array([1.0])]
    cur = np.array([1.0])
    for _ in range(N):
        cur = np.convolve(cur, p.pmf)[: N + 1]
        convs.append(cur)
    from .trees import TOTAL_PROGENY

    table = ProgenyTailTable(p, TOTAL_PROGENY, convs)
    table.forest_points(k)
    return table


def width_cdf_vector(
    p: OffspringDist,
    n: int,
    *,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = 10**6,
) -> np.ndarray:
    """a[k] = P[W(tau^(k)) <= n] for 0 <= k <= n.

    a is the minimal fixed point of a[i] = sum_{j<=n} T(i,j) a[j] with
    T(i, .) the i-fold offspring convolution truncated at n (mass pushed
    above n is killed, which is exactly the width exceedance).  Iteration
    starts from the absorption indicator and increases monotonically.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    size = n + 1
    T = np.zeros((size, size))
    T[0, 0] = 1.0
    row = np.array([1.0])
    for i in range(1, size):
        row = np.convolve(row, p.pmf)[:size]
        T[i, : row.size] = row
    a = np.zeros(size)
    a[0] = 1.0
    for _ in range(max_iter):
        nxt = T @ a
        nxt[0] = 1.0
        delta = float(np.max(np.abs(nxt - a)))
        a = nxt
        if delta < tol:
            return a
    raise ConvergenceError(f"width absorption iteration stalled at n={n}")


def width_cdf(p: OffspringDist, k: int, n: int) -> float:
    """P[W(tau^(k)) <= n]; zero when k > n since generation 0 has k roots."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        return 0.0
    return float(width_cdf_vector(p, n)[k])


def width_table(p: OffspringDist, N: int) -> WidthTailTable:
    vectors = {n: width_cdf_vector(p, n) for n in range(N + 1)}
    meta = {}
    if p.truncation_mass > 0:
        meta["truncation_warning"] = p.truncation_mass
    from .trees import WIDTH

    return WidthTailTable(p, WIDTH, vectors, meta)


def count_in_set_pmf(
    p: OffspringDist,
    degree_set: DegreeSet,
    k: int = 1,
    N: int = 64,
    *,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = SERIES_MAX_ITER,
) -> CountTailTable:
    """Coefficients of E[x^{L_A(tau)}] to degree N, forest variant for ``k``.

    The series is the fixed point of phi = x * P_A(phi) + P_Ac(phi), with
    P_A, P_Ac the pgf restricted to degrees in/out of the set; iterating from
    zero adds tree height one generation per pass, so coefficients increase
    monotonically to the exact point masses.
    """
    in_set = np.array([1.0 if kk in degree_set else 0.0 for kk in range(p.pmf.size)])
    pa = p.pmf * in_set
    pac = p.pmf * (1.0 - in_set)
    phi = np.zeros(N + 1)
    for _ in range(max_iter):
        term_a = np.zeros(N + 1)
        term_c = np.zeros(N + 1)
        power = np.zeros(N + 1)
        power[0] = 1.0
        for kk in range(p.pmf.size):
            if pa[kk] != 0.0:
                term_a += pa[kk] * power
            if pac[kk] != 0.0:
                term_c += pac[kk] * power
            if kk + 1 < p.pmf.size:
                power = np.convolve(power, phi)[: N + 1]
        nxt = term_c.copy()
        nxt[1:] += term_a[:-1]  # the x factor marks the counted node
        delta = float(np.max(np.abs(nxt - phi)))
        phi = nxt
        if delta < tol:
            break
    else:
        raise ConvergenceError(
            f"count-in-set series did not stabilize to {tol} in {max_iter} passes"
        )
    from .trees import count_in_set as _cis

    table = CountTailTable(p, _cis(degree_set), phi)
    table.forest_points(k)
    return table


def tail_table(p: OffspringDist, functional: Functional, N: int) -> TailTable:
    """The appropriate table for any supported functional."""
    if functional.kind == "height":
        return height_tail(p, N)
    if functional.kind == "maxdeg":
        return maxdeg_tail(p, N)
    if functional.kind == "width":
        return width_table(p, N)
    if functional.degree_set == ALL_DEGREES:
        return progeny_pmf(p, 1, N)
    return count_in_set_pmf(p, functional.degree_set, 1, N)


# ---------------------------------------------------------------------------
# prefix laws
# ---------------------------------------------------------------------------


@dataclass
class PrefixLaw:
    """A probability table over trees of height <= ``height``.

    ``deficiency`` is the mass escaping the tabulated support (enumeration
    cap or Monte Carlo support), accounted honestly rather than renormalized.
    """

    height: int
    probs: dict[PlaneTree, float]
    deficiency: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(sum(self.probs.values()))

    def prob(self, t: PlaneTree) -> float:
        return self.probs.get(t, 0.0)

    def items(self):
        return self.probs.items()

    def __len__(self) -> int:
        return len(self.probs)


def tv_distance(a: PrefixLaw, b: PrefixLaw) -> float:
    """Total-variation upper bound between two prefix laws.

    The tabulated parts contribute half the L1 gap; each law's deficiency is
    treated as living where the other has none, giving a conservative upper
    bound that is exact whenever one law's table covers the other's support.
    """
    if a.height != b.height:
        raise ValueError(f"height mismatch: {a.height} vs {b.height}")
    keys = set(a.probs) | set(b.probs)
    gap = sum(abs(a.prob(t) - b.prob(t)) for t in keys)
    return 0.5 * gap + 0.5 * (a.deficiency + b.deficiency)


def prefix_prob(p: OffspringDist, t: PlaneTree, b: int) -> float:
    """P[r_b(tau) = t]: the product of p_{k_u} over nodes of t below height b."""
    if t.height > b:
        raise ValueError(f"tree of height {t.height} is not a height-{b} prefix")
    prob = 1.0
    for deg, dep in zip(t.degrees, t.depths):
        if dep < b:
            prob *= p.prob(deg)
            if prob == 0.0:
                return 0.0
    return prob


def _root_subtrees(t: PlaneTree) -> list[PlaneTree]:
    subs = []
    i = 1
    while i < len(t.degrees):
        j = t.subtree_end(i)
        subs.append(PlaneTree(t.degrees[i:j]))
        i = j
    return subs


def spine_prefix_prob(p: OffspringDist, t: PlaneTree, b: int) -> float:
    """P[r_b of the immortal tree = t], computed from the construction itself.

    The root is special with the size-biased offspring law; one uniformly
    chosen child continues the spine; all other children grow as plain
    trees restricted to the remaining height.  This route is independent of
    the single-formula law used by ``immortal_prefix_law`` and serves as its
    cross-check.
    """
    if t.height > b:
        raise ValueError(f"tree of height {t.height} is not a height-{b} prefix")
    if b == 0:
        return 1.0 if t.n_nodes == 1 else 0.0
    k = t.degrees[0]
    if k == 0:
        return 0.0  # the spine never dies
    subs = _root_subtrees(t)
    normal = [prefix_prob(p, s, b - 1) for s in subs]
    total = 0.0
    for i, s in enumerate(subs):
        special = spine_prefix_prob(p, s, b - 1)
        if special == 0.0:
            continue
        rest = 1.0
        for j, q in enumerate(normal):
            if j != i:
                rest *= q
        total += special * rest
    return (p.prob(k) / p.mean) * total


def immortal_prefix_law(
    p: OffspringDist,
    b: int,
    *,
    support: Iterable[PlaneTree] | None = None,
    max_degree: int | None = None,
    node_cap: int | None = None,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> PrefixLaw:
    """Law of the height-b restriction of the immortal tree.

    The mass of a prefix t is mu^{-b} Y_b(t) P[r_b(tau) = t].  With no
    explicit ``support`` the full height-b tree set is enumerated, which is
    feasible only for small offspring supports; otherwise pass the trees of
    interest (e.g. an observed Monte Carlo support) and the remainder is
    reported as deficiency.
    """
    if p.classify() == "supercritical":
        raise ValueError("immortal trees require a critical or subcritical law")
    if support is None:
        maxdeg = p.max_degree if max_degree is None else min(max_degree, p.max_degree)
        cap = node_cap if node_cap is not None else _tb_node_bound(maxdeg, b)
        support = enumerate_trees(maxdeg, b, cap, budget=budget)
        enumerated = True
    else:
        support = list(support)
        enumerated = False
    mu_pow = p.mean**b
    probs: dict[PlaneTree, float] = {}
    for t in support:
        yb = generation_size(t, b)
        if yb == 0:
            continue
        mass = yb * prefix_prob(p, t, b) / mu_pow
        if mass > 0.0:
            probs[t] = mass
    total = float(sum(probs.values()))
    deficiency = max(0.0, 1.0 - total)
    meta = {"enumerated": enumerated, "mu": p.mean}
    if deficiency > DEFICIENCY_FLAG:
        meta["deficiency_warning"] = deficiency
    return PrefixLaw(b, probs, deficiency, meta)


def _tb_node_bound(maxdeg: int, b: int) -> int:
    # all of T^(b) has at most (maxdeg^{b+1}-1)/(maxdeg-1) nodes per tree
    if maxdeg <= 1:
        return b + 1
    return (maxdeg ** (b + 1) - 1) // (maxdeg - 1)


# ---------------------------------------------------------------------------
# conditioned prefix laws
# ---------------------------------------------------------------------------


def _prefix_stats(t: PlaneTree, b: int, functional: Functional) -> dict:
    """Per-prefix quantities needed by the conditional decompositions."""
    yb = generation_size(t, b)
    stats = {"yb": yb}
    if functional.kind == "maxdeg":
        stats["prefix_max"] = max(
            (deg for deg, dep in zip(t.degrees, t.depths) if dep < b), default=0
        )
    elif functional.kind == "width":
        gens = [0] * b
        for dep in t.depths:
            if dep < b:
                gens[dep] += 1
        stats["prefix_sup"] = max(gens) if gens else 0
    elif functional.kind == "count":
        stats["shift"] = sum(
            1
            for deg, dep in zip(t.degrees, t.depths)
            if dep < b and deg in functional.degree_set
        )
    return stats


def _conditional_factor(
    functional: Functional,
    cond: Conditioning,
    t: PlaneTree,
    b: int,
    table: TailTable,
) -> float:
    """P[conditioning event | r_b(tau) = t], exact."""
    stats = _prefix_stats(t, b, functional)
    yb = stats["yb"]
    if yb == 0:
        # the tree equals its prefix; the functional value is determined
        return 1.0 if cond.holds(functional.value(t)) else 0.0
    n = cond.n
    if functional.kind == "height":
        m = n - b
        if cond.kind == "tail":
            return table.forest_tail(yb, m)
        return table.forest_point(yb, m)
    if functional.kind == "maxdeg":
        pm = stats["prefix_max"]
        if cond.kind == "tail":
            return 1.0 if pm > n else table.forest_tail(yb, n)
        if pm > n:
            return 0.0
        if pm == n:
            return 1.0 - table.forest_tail(yb, n)  # every subtree stays <= n
        return table.forest_point(yb, n)
    if functional.kind == "count":
        m = n - stats["shift"]
        if cond.kind == "tail":
            return table.forest_tail(yb, m)
        return table.forest_point(yb, m)
    if functional.kind == "width":
        sup = stats["prefix_sup"]
        if cond.kind == "tail":
            # a prefix generation already above n settles the event
            return 1.0 if sup > n else table.forest_tail(yb, n)
        if sup > n:
            return 0.0
        if sup == n:
            return 1.0 - table.forest_tail(yb, n)
        return table.forest_point(yb, n)
    raise ValueError(f"unsupported functional {functional}")


def conditioned_prefix_law(
    p: OffspringDist,
    functional: Functional,
    cond: Conditioning,
    b: int,
    *,
    table: TailTable | None = None,
    max_degree: int | None = None,
    node_cap: int | None = None,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> PrefixLaw:
    """Exact law of r_b(tau) given {A(tau) > n} or {A(tau) = n}.

    The event probability decomposes across the subtrees above height b
    through the forest law of the functional, with the prefix contributing a
    max (height, out-degree, width) or an additive shift (counts).
    """
    if functional.kind == "width" and cond.kind == "point" and p.truncation_mass > 0:
        raise ValueError(
            "width point-conditioning requires a genuinely bounded support"
        )
    if table is None:
        table = tail_table(p, functional, max(cond.n, 1))
    denom = table.tail(cond.n) if cond.kind == "tail" else table.point_mass(cond.n)
    if denom <= 0.0:
        raise ZeroProbabilityEvent(
            f"{functional.describe()} {cond.describe()} has zero probability"
        )
    maxdeg = p.max_degree if max_degree is None else min(max_degree, p.max_degree)
    cap = node_cap if node_cap is not None else _tb_node_bound(maxdeg, b)
    support = enumerate_trees(maxdeg, b, cap, budget=budget)
    probs: dict[PlaneTree, float] = {}
    mass = 0.0
    for t in support:
        base = prefix_prob(p, t, b)
        if base == 0.0:
            continue
        factor = _conditional_factor(functional, cond, t, b, table)
        if factor <= 0.0:
            continue
        w = base * factor
        probs[t] = w / denom
        mass += w
    deficiency = max(0.0, 1.0 - mass / denom)
    meta = {
        "event": cond.describe(),
        "denominator": denom,
        "support_mass_gap": 1.0 - mass / denom,
    }
    if deficiency > DEFICIENCY_FLAG:
        meta["deficiency_warning"] = deficiency
    return PrefixLaw(b, probs, deficiency, meta)


# ---------------------------------------------------------------------------
# brute-force enumeration
# ---------------------------------------------------------------------------


def _gen_trees(maxdeg: int, h: int, cap: int):
    yield (0,)
    if h == 0 or cap < 2:
        return
    top = min(maxdeg, cap - 1)
    for d in range(1, top + 1):
        for forest in _gen_forests(maxdeg, d, h - 1, cap - 1):
            yield (d,) + forest


def _gen_forests(maxdeg: int, d: int, h: int, cap: int):
    if d == 0:
        yield ()
        return
    for t in _gen_trees(maxdeg, h, cap - (d - 1)):
        for rest in _gen_forests(maxdeg, d - 1, h, cap - len(t)):
            yield t + rest


def enumerate_trees(
    maxdeg: int,
    h: int,
    node_cap: int,
    *,
    budget: int = DEFAULT_ENUM_BUDGET,
) -> list[PlaneTree]:
    """All trees with height <= h, out-degrees <= maxdeg, and <= node_cap
    nodes, in canonical (size, degree-sequence) order."""
    if maxdeg < 0 or h < 0 or node_cap < 1:
        raise ValueError("bounds must be nonnegative and allow the root")
    out = []
    for degs in _gen_trees(maxdeg, h, node_cap):
        out.append(degs)
        if len(out) > budget:
            raise EnumerationBudgetError(
                f"enumeration exceeded budget of {budget} trees"
            )
    out.sort(key=lambda d: (len(d), d))
    return [PlaneTree(d) for d in out]


def enumeration_law(p: OffspringDist, trees: Sequence[PlaneTree]) -> np.ndarray:
    """P[tau = t] for each t: the product of p_{k_u} over all nodes."""
    out = np.empty(len(trees))
    for i, t in enumerate(trees):
        prob = 1.0
        for d in t.degrees:
            prob *= p.prob(d)
        out[i] = prob
    return out
