"""First-digit statistics and divergence measures against the Benford reference.

The reference distribution assigns digit d the probability log10(1 + 1/d).
Empirical distributions are built from the first significant digits of
arbitrary real values; zeros carry no digit and are excluded. All functions
are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

DIGITS = tuple(range(1, 10))


@dataclass(frozen=True)
class DigitDistribution:
    """A probability vector over leading digits 1..9.

    ``support_count`` is the number of values that contributed a digit;
    ``None`` marks an analytic reference distribution. A distribution with
    ``support_count == 0`` is flagged empty and rejected by the comparison
    statistics.
    """

    probs: np.ndarray
    support_count: int | None

    def __post_init__(self) -> None:
        arr = np.array(self.probs, dtype=np.float64)
        if arr.shape != (9,):
            raise ValueError(f"digit distribution needs exactly 9 probabilities, got shape {arr.shape}")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("digit probabilities must lie in [0, 1]")
        if not self.is_empty and abs(math.fsum(arr.tolist()) - 1.0) > 1e-12:
            raise ValueError(f"digit probabilities must sum to 1, got {math.fsum(arr.tolist())}")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def is_empty(self) -> bool:
        return self.support_count == 0

    def prob(self, digit: int) -> float:
        if digit not in DIGITS:
            raise ValueError(f"digit must be in 1..9, got {digit}")
        return float(self.probs[digit - 1])


@dataclass(frozen=True)
class DivergenceReport:
    """KS statistic (in [0, 1]) and KL divergence (nonnegative) for one comparison."""

    ks: float
    kl: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.ks <= 1.0:
            raise ValueError(f"ks must lie in [0, 1], got {self.ks}")
        if self.kl < 0.0:
            raise ValueError(f"kl must be nonnegative, got {self.kl}")


def benford_pmf() -> DigitDistribution:
    """The Benford reference: P(d) = log10(1 + 1/d) for d in 1..9."""
    probs = np.log10(1.0 + 1.0 / np.arange(1.0, 10.0))
    return DigitDistribution(probs=probs, support_count=None)


def first_digit(value: float) -> int | None:
    """First significant decimal digit of |value|, or None for zero.

    The value is scaled by powers of ten until it lies in [1, 10), then
    truncated. The scaling runs on the exact integer ratio of the float, so
    values sitting within rounding distance of a decade boundary still get
    the digit of their exact binary value.
    """
    v = float(value)
    if not math.isfinite(v):
        raise ValueError(f"first digit undefined for non-finite value {value!r}")
    if v == 0.0:
        return None
    n, d = abs(v).as_integer_ratio()
    # log10 gives the decade up to +-1; the loops below settle the rest.
    e = math.floor(math.log10(abs(v)))
    if e > 0:
        d *= 10**e
    elif e < 0:
        n *= 10**-e
    while n < d:
        n *= 10
    while n >= 10 * d:
        d *= 10
    return int(n // d)


def digit_histogram(values: Iterable[float] | np.ndarray) -> DigitDistribution:
    """Empirical first-digit distribution of a collection of reals.

    Zeros are skipped and do not count toward the support; an all-zero (or
    empty) input yields the flagged-empty distribution. Rejects non-finite
    values.
    """
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("digit histogram requires finite values")
    counts = np.zeros(9, dtype=np.float64)
    # Deduplicate first: magnitude fields from quantised images repeat heavily.
    unique, multiplicity = np.unique(np.abs(arr), return_counts=True)
    for v, m in zip(unique.tolist(), multiplicity.tolist()):
        d = first_digit(v)
        if d is not None:
            counts[d - 1] += m
    support = int(counts.sum())
    if support == 0:
        return DigitDistribution(probs=np.zeros(9), support_count=0)
    return DigitDistribution(probs=counts / support, support_count=support)


def _require_usable(dist: DigitDistribution, name: str) -> None:
    if dist.is_empty:
        raise ValueError(f"{name} distribution is empty (no values carried a digit)")


def ks_statistic(p: DigitDistribution, q: DigitDistribution) -> float:
    """Kolmogorov-Smirnov statistic between two digit distributions.

    The supremum of |Acc(p) - Acc(q)| over the 9 ordered digit bins, where
    Acc accumulates probabilities from digit 1 upward. Symmetric, in [0, 1].
    """
    _require_usable(p, "first")
    _require_usable(q, "second")
    gaps = np.abs(np.cumsum(p.probs) - np.cumsum(q.probs))
    # Accumulated sums can overshoot 1 by ~1e-16; keep the contract tight.
    return float(min(gaps.max(), 1.0))


def kl_divergence(p: DigitDistribution, q: DigitDistribution) -> float:
    """Kullback-Leibler divergence sum_d p(d) ln(p(d)/q(d)).

    Natural logarithm; terms with p(d) = 0 contribute zero. Undefined (and
    rejected) when q(d) = 0 while p(d) > 0. Nonnegative by Gibbs'
    inequality.
    """
    _require_usable(p, "first")
    _require_usable(q, "second")
    pk = p.probs
    qk = q.probs
    if np.any((qk == 0.0) & (pk > 0.0)):
        raise ValueError("KL divergence undefined: reference assigns zero mass where p has mass")
    mask = pk > 0.0
    return float(np.sum(pk[mask] * np.log(pk[mask] / qk[mask])))


def divergence_from_benford(p: DigitDistribution) -> DivergenceReport:
    """Convenience wrapper scoring one empirical distribution against Benford."""
    reference = benford_pmf()
    return DivergenceReport(ks=ks_statistic(p, reference), kl=kl_divergence(p, reference))
