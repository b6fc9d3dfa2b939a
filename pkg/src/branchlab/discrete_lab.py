"""Local-convergence and ratio-limit experiments for conditioned trees.

Each runner produces a :class:`ConvergenceReport`: a grid of thresholds n
with, per n, the total-variation distance between the exact (or sampled)
conditioned prefix law and the immortal-tree prefix law, or the ratio
diagnostics of forest tails against their limits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence


from . import exact as ex
from . import samplers as sam
from .offspring import OffspringDist
from .reports import write_csv
from .rng import RngStream
from .trees import Functional

__all__ = [
    "ConvergenceReport",
    "run_tail_convergence",
    "run_point_convergence",
    "run_ratio_limits",
    "probe_conjectures",
]


@dataclass
class ConvergenceReport:
    offspring: str
    functional: str
    conditioning: str
    b: int | None
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def write(self, path: Path | str) -> None:
        write_csv(path, self.rows)

    def column(self, name: str) -> list:
        return [row.get(name) for row in self.rows]


def _mc_tv_and_se(counts, reference: ex.PrefixLaw, b: int) -> tuple[float, float]:
    law = sam.counts_to_prefix_law(counts, b)
    tv = ex.tv_distance(law, reference)
    n = sum(counts.values())
    # scale of E|p_hat - p| summed over atoms, a delta-method proxy
    se = 0.5 * math.sqrt(2.0 / (math.pi * n)) * sum(
        math.sqrt(p * (1.0 - p)) for p in law.probs.values()
    )
    return tv, se


def run_tail_convergence(
    p: OffspringDist,
    functional: Functional,
    b: int,
    n_grid: Sequence[int],
    mode: str = "exact",
    *,
    rng: RngStream | None = None,
    reps: int = 100_000,
    max_degree: int | None = None,
    budget: sam.SamplerBudget | None = None,
) -> ConvergenceReport:
    """TV between the law of r_b given {A > n} and the immortal prefix law."""
    if p.classify() == "supercritical":
        raise ValueError("conditioned limits need a critical or subcritical law")
    immortal = ex.immortal_prefix_law(p, b, max_degree=max_degree)
    table = ex.tail_table(p, functional, max(n_grid))
    rows = []
    degenerate = False
    for i, n in enumerate(sorted(n_grid)):
        row: dict = {"n": n, "mode": mode}
        try:
            if mode == "exact":
                law = ex.conditioned_prefix_law(
                    p, functional, ex.Tail(n), b, table=table, max_degree=max_degree
                )
                row["tv"] = ex.tv_distance(law, immortal)
                row["se"] = 0.0
            else:
                counts, info = sam.conditioned_prefix_counts(
                    p, functional, ex.Tail(n), b, rng.child(i), reps, budget=budget
                )
                if info["accepted"] == 0:
                    row["skipped"] = "no acceptances in budget"
                else:
                    row["tv"], row["se"] = _mc_tv_and_se(counts, immortal, b)
                    row["acceptance_rate"] = info["acceptance_rate"]
        except ex.ZeroProbabilityEvent:
            row["skipped"] = "zero-probability event"
            degenerate = True
        rows.append(row)
    meta = {
        "immortal_total": immortal.total,
        "immortal_deficiency": immortal.deficiency,
        "degenerate_lattice": degenerate,
    }
    return ConvergenceReport(p.describe(), functional.name, "tail", b, rows, meta)


def run_point_convergence(
    p: OffspringDist,
    functional: Functional,
    b: int,
    n_grid: Sequence[int],
    mode: str = "exact",
    *,
    rng: RngStream | None = None,
    reps: int = 100_000,
    max_degree: int | None = None,
    budget: sam.SamplerBudget | None = None,
) -> ConvergenceReport:
    """TV between the law of r_b given {A = n} and the immortal prefix law.

    Thresholds outside the point-mass support lattice are reported as
    skipped; a lattice bounded strictly inside the grid (as for the maximal
    out-degree of a bounded offspring law) flags the report as degenerate.
    """
    if p.classify() == "supercritical":
        raise ValueError("conditioned limits need a critical or subcritical law")
    immortal = ex.immortal_prefix_law(p, b, max_degree=max_degree)
    table = ex.tail_table(p, functional, max(n_grid))
    lattice = set(table.support_lattice())
    rows = []
    for i, n in enumerate(sorted(n_grid)):
        row: dict = {"n": n, "mode": mode}
        if n not in lattice:
            row["skipped"] = "outside support lattice"
            rows.append(row)
            continue
        if mode == "exact":
            law = ex.conditioned_prefix_law(
                p, functional, ex.Point(n), b, table=table, max_degree=max_degree
            )
            row["tv"] = ex.tv_distance(law, immortal)
            row["se"] = 0.0
        else:
            counts, info = sam.conditioned_prefix_counts(
                p, functional, ex.Point(n), b, rng.child(i), reps, budget=budget
            )
            if info["accepted"] == 0:
                row["skipped"] = "no acceptances in budget"
            else:
                row["tv"], row["se"] = _mc_tv_and_se(counts, immortal, b)
                row["acceptance_rate"] = info["acceptance_rate"]
        rows.append(row)
    meta = {
        "immortal_total": immortal.total,
        "immortal_deficiency": immortal.deficiency,
        "support_lattice_max": max(lattice) if lattice else None,
        "degenerate_lattice": bool(lattice) and max(lattice) < max(n_grid),
    }
    return ConvergenceReport(p.describe(), functional.name, "point", b, rows, meta)


def run_ratio_limits(
    p: OffspringDist,
    functional: Functional,
    k_list: Sequence[int],
    r_list: Sequence[int],
    n_grid: Sequence[int],
    mode: str = "exact",
    *,
    rng: RngStream | None = None,
    reps: int = 200_000,
) -> ConvergenceReport:
    """Forest-to-tree ratio diagnostics against their limits.

    Per threshold n and forest size k the report tabulates
    tail(k, n)/(k tail(n)) -> 1, point(k, n)/(k point(n)) -> 1 and the shift
    ratios tail(k, n-r)/tail(k, n) -> 1; division by an empty event is
    flagged, not fatal.  Max-type functionals also carry the closed-form
    versus binomial-expansion cross-check of the forest point mass.
    """
    if p.classify() != "critical":
        raise ValueError("ratio limits are stated for critical laws")
    table = ex.tail_table(p, functional, max(n_grid))
    mc_tables = None
    if mode != "exact":
        mc_tables = _mc_forest_samples(p, functional, max(k_list), reps, rng)
    rows = []
    for n in sorted(n_grid):
        for k in k_list:
            row: dict = {"n": n, "k": k, "mode": mode}
            if mode == "exact":
                vn, vkn = table.tail(n), table.forest_tail(k, n)
                pn, pkn = table.point_mass(n), table.forest_point(k, n)
                row["tail_ratio"] = vkn / (k * vn) if vn > 0 else math.nan
                row["point_ratio"] = pkn / (k * pn) if pn > 0 else math.nan
                if vn == 0 or pn == 0:
                    row["flag"] = "zero denominator"
                for r in r_list:
                    denom = table.forest_tail(k, n)
                    num = table.forest_tail(k, n - r)
                    row[f"shift_ratio_r{r}"] = num / denom if denom > 0 else math.nan
                if isinstance(table, ex.MaxTailTable):
                    row["max_route_gap"] = abs(
                        table.forest_point(k, n) - table.forest_point_binomial(k, n)
                    )
            else:
                vals_1, vals_k = mc_tables[1], mc_tables[k]
                vn = float((vals_1 > n).mean())
                vkn = float((vals_k > n).mean())
                pn = float((vals_1 == n).mean())
                pkn = float((vals_k == n).mean())
                row["tail_ratio"] = vkn / (k * vn) if vn > 0 else math.nan
                row["point_ratio"] = pkn / (k * pn) if pn > 0 else math.nan
                row["se_tail"] = (
                    math.sqrt(vkn * (1 - vkn) / vals_k.size) / (k * vn)
                    if vn > 0
                    else math.nan
                )
            rows.append(row)
    return ConvergenceReport(
        p.describe(), functional.name, "ratio", None, rows,
        {"k_list": list(k_list), "r_list": list(r_list)},
    )


def _mc_forest_samples(p, functional, k_max, reps, rng: RngStream):
    """Functional values of tau^(k) for k = 1..k_max from one batch."""
    batch = sam.gw_batch(
        p, rng.child(0), reps * k_max, node_cap=10**6,
        count_set=functional.degree_set if functional.kind == "count" else None,
    )
    vals = batch.functional_values(functional).reshape(reps, k_max)
    out = {}
    for k in range(1, k_max + 1):
        sub = vals[:, :k]
        if functional.kind in ("height", "maxdeg"):
            out[k] = sub.max(axis=1)
        elif functional.kind == "count":
            out[k] = sub.sum(axis=1)
        else:  # width needs the level profile, not exposed by the batch
            raise NotImplementedError("MC forest width is not supported")
    return out


def probe_conjectures(
    p: OffspringDist,
    functional: Functional,
    b: int,
    n_grid: Sequence[int],
    reps: int,
    rng: RngStream,
    *,
    budget: sam.SamplerBudget | None = None,
) -> ConvergenceReport:
    """Exploratory probes of subcritical heavy-tail conditionings.

    Conditioned prefix laws are compared against two Monte Carlo references:
    the immortal law and the capped-spine variant (spine length geometric
    with the offspring mean as its survival rate).  Both TVs are emitted
    without asserting a winner; results are tagged exploratory.
    """
    if p.classify() != "subcritical":
        raise ValueError("conjecture probes target subcritical laws")
    if functional.kind not in ("maxdeg", "count"):
        raise ValueError("probes cover the maximal out-degree and counts")
    budget = budget or sam.SamplerBudget(max_attempts=2 * 10**6, node_cap=10**6)
    imm_counts = sam.immortal_prefix_counts(p, rng.child(0), b, reps)
    imm_law = sam.counts_to_prefix_law(imm_counts, b)
    cap_counts = sam.condensation_prefix_counts(p, rng.child(1), b, reps)
    cap_law = sam.counts_to_prefix_law(cap_counts, b)
    rows = []
    for i, n in enumerate(sorted(n_grid)):
        counts, info = sam.conditioned_prefix_counts(
            p, functional, ex.Tail(n), b, rng.child(2 + i), reps, budget=budget
        )
        row: dict = {"n": n, "attempts": info["attempts"], "accepted": info["accepted"]}
        if info["accepted"] == 0:
            row["skipped"] = "budget exhausted"
        else:
            tv_imm, se1 = _mc_tv_and_se(counts, imm_law, b)
            tv_cap, se2 = _mc_tv_and_se(counts, cap_law, b)
            row.update(
                tv_immortal=tv_imm, tv_capped_spine=tv_cap,
                se_immortal=se1, se_capped=se2,
                budget_exhausted=info["budget_exhausted"],
            )
        rows.append(row)
    return ConvergenceReport(
        p.describe(), functional.name, "conjecture-probe", b, rows,
        {"exploratory": True, "reference": "capped-spine variant, not a law "
                                           "from the cited condensation construction"},
    )
