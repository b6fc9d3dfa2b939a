"""Offspring distributions: pmf, generating function, size-biasing.

Closed-form families are materialized to a finite pmf; mass cut off beyond
the support cap is recorded in ``truncation_mass`` and the remainder is
renormalized, so every instance is a bona-fide finite-support law whose exact
quantities the rest of the engine can compute without further approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

CRITICALITY_TOL = 1e-12
DEFAULT_TRUNCATION_BOUND = 1e-10


@dataclass(frozen=True)
class OffspringDist:
    pmf: np.ndarray
    family: str = "explicit"
    params: dict[str, Any] = field(default_factory=dict)
    truncation_mass: float = 0.0

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a nonempty 1-d array")
        if np.any(pmf < 0):
            raise ValueError("pmf entries must be nonnegative")
        total = float(pmf.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"pmf sums to {total}, expected 1 within 1e-12")
        while pmf.size > 1 and pmf[-1] == 0.0:
            pmf = pmf[:-1]
        pmf = pmf.copy()
        pmf.flags.writeable = False
        object.__setattr__(self, "pmf", pmf)
        if self.mean <= 0:
            raise ValueError("offspring mean must be positive")
        # the deterministic one-child law is excluded as a GW offspring law,
        # but may arise as a size-biased companion (e.g. of p = (1/2, 1/2))
        if not self.family.startswith("size-biased"):
            if pmf.size == 2 and pmf[1] == 1.0:
                raise ValueError("the deterministic one-child law is excluded")

    # -- moments -------------------------------------------------------------

    @property
    def mean(self) -> float:
        return float(np.arange(self.pmf.size) @ self.pmf)

    @property
    def second_moment(self) -> float:
        k = np.arange(self.pmf.size)
        return float((k * k) @ self.pmf)

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2

    @property
    def max_degree(self) -> int:
        """Top of the materialized support."""
        return self.pmf.size - 1

    def prob(self, k: int) -> float:
        return float(self.pmf[k]) if 0 <= k <= self.max_degree else 0.0

    # -- generating function ---------------------------------------------------

    def pgf(self, s: float) -> float:
        """sum_k p_k s^k for s in [0, 1]."""
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"pgf argument {s} outside [0, 1]")
        return float(np.polynomial.polynomial.polyval(s, self.pmf))

    def pgf_prime(self, s: float) -> float:
        if not 0.0 <= s <= 1.0:
            raise ValueError(f"pgf argument {s} outside [0, 1]")
        k = np.arange(1, self.pmf.size)
        return float(np.polynomial.polynomial.polyval(s, k * self.pmf[1:]))

    # -- derived laws -----------------------------------------------------------

    def size_biased(self) -> "OffspringDist":
        """The law with weights k p_k / mean; never produces zero children."""
        k = np.arange(self.pmf.size)
        biased = k * self.pmf / self.mean
        biased = biased / biased.sum()
        return OffspringDist(
            biased,
            family=f"size-biased({self.family})",
            params=dict(self.params),
            truncation_mass=self.truncation_mass,
        )

    def classify(self) -> str:
        gap = self.mean - 1.0
        if abs(gap) <= CRITICALITY_TOL:
            return "critical"
        return "subcritical" if gap < 0 else "supercritical"

    # -- descriptions -----------------------------------------------------------

    def describe(self) -> str:
        if self.family == "explicit":
            body = ",".join(f"{x:g}" for x in self.pmf)
            return f"explicit[{body}]"
        args = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
        return f"{self.family}({args})"

    def to_json(self) -> dict[str, Any]:
        if self.family == "explicit":
            return {"family": "explicit", "pmf": [float(x) for x in self.pmf]}
        return {"family": self.family, **self.params}

    @classmethod
    def from_json(cls, spec: dict[str, Any]) -> "OffspringDist":
        spec = dict(spec)
        family = spec.pop("family")
        if family == "explicit":
            return explicit(spec["pmf"])
        if family == "binary":
            return binary(**spec)
        if family == "geometric":
            return geometric(**spec)
        if family == "poisson":
            return poisson(**spec)
        if family == "heavy_tail":
            return heavy_tail(**spec)
        raise ValueError(f"unknown offspring family {family!r}")


# -- constructors ----------------------------------------------------------------


def explicit(pmf) -> OffspringDist:
    return OffspringDist(np.asarray(pmf, dtype=float))


def binary(p0: float = 0.5) -> OffspringDist:
    """Offspring 0 or 2: p_0 = p0, p_2 = 1 - p0.  Critical at p0 = 1/2."""
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie strictly between 0 and 1")
    return OffspringDist(
        np.array([p0, 0.0, 1.0 - p0]), family="binary", params={"p0": p0}
    )


def geometric(a: float = 0.5, cap: int | None = None) -> OffspringDist:
    """p_k = (1-a) a^k, truncated at ``cap`` and renormalized.

    Critical at a = 1/2, where p_k = 2^{-(k+1)}.  The default cap keeps the
    dropped mass under DEFAULT_TRUNCATION_BOUND.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("a must lie strictly between 0 and 1")
    if cap is None:
        cap = max(2, int(math.ceil(math.log(DEFAULT_TRUNCATION_BOUND * 0.01) / math.log(a))))
    k = np.arange(cap + 1)
    pmf = (1.0 - a) * a**k
    dropped = float(a ** (cap + 1))  # tail of the geometric series
    return OffspringDist(
        pmf / pmf.sum(),
        family="geometric",
        params={"a": a, "cap": cap},
        truncation_mass=dropped,
    )


def poisson(lam: float = 1.0, cap: int | None = None) -> OffspringDist:
    """Poisson(lam) truncated at ``cap`` and renormalized.  Critical at lam = 1."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    if cap is None:
        cap = 10
        while _poisson_tail(lam, cap) > DEFAULT_TRUNCATION_BOUND * 0.01:
            cap += 5
    k = np.arange(cap + 1)
    logs = k * math.log(lam) - lam - np.cumsum(np.concatenate(([0.0], np.log(np.arange(1, cap + 1)))))
    pmf = np.exp(logs)
    dropped = float(_poisson_tail(lam, cap))
    return OffspringDist(
        pmf / pmf.sum(),
        family="poisson",
        params={"lam": lam, "cap": cap},
        truncation_mass=dropped,
    )


def _poisson_tail(lam: float, cap: int) -> float:
    term = math.exp(-lam)
    total = term
    for k in range(1, cap + 1):
        term *= lam / k
        total += term
    return max(0.0, 1.0 - total)


def heavy_tail(gamma: float = 2.5, mean: float = 0.8, cap: int = 10**6) -> OffspringDist:
    """p_k proportional to k^{-gamma} for k >= 1, with p_0 forcing the mean.

    gamma in (2, 3) gives finite mean and infinite variance before the cap;
    the exponential moment sum_k a^k p_k diverges for every a > 1, which is
    the regime the subcritical probes target.
    """
    if not 2.0 < gamma < 3.0:
        raise ValueError("gamma must lie in (2, 3)")
    if not 0.0 < mean <= 1.0:
        raise ValueError("target mean must lie in (0, 1]")
    k = np.arange(1, cap + 1, dtype=float)
    weights = k**-gamma
    scale = mean / float((k * weights).sum())
    body = scale * weights
    p0 = 1.0 - float(body.sum())
    if p0 < 0:
        raise ValueError("target mean too large for this exponent/cap")
    pmf = np.concatenate(([p0], body))
    # dropped tail of the intended infinite series, integral bound
    dropped = scale * cap ** (1.0 - gamma) / (gamma - 1.0)
    return OffspringDist(
        pmf / pmf.sum(),
        family="heavy_tail",
        params={"gamma": gamma, "mean": mean, "cap": cap},
        truncation_mass=float(dropped),
    )
