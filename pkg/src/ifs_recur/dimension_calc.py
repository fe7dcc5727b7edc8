"""Closed-form dimension lower bound and the Hausdorff-measure dichotomy.

The lower bound applies to equal-positive-diagonal families with diagonal
entries lambda_1..lambda_d (each below 1/2) and lambda(A) > 1, for targets
shrinking at the overspeed rate lambda(A)^{-s n} with s > 1.  It is a
minimum over finitely many exponents p of a piecewise expression driven by
a three-way partition of the axes; the candidate set P consists of the
axis exponents a_i and their shifts a_i + (s-1)/d.

The dichotomy criterion classifies the series sum 2^{n(1-s)} h(n)^s for
bounded h: convergence forces zero s-dimensional Hausdorff measure of the
recurrence set inside any ball, divergence forces full measure.  Verdicts
are emitted only for closed-form h families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ConsistencyError
from .measure_lab import HFamily, HKind

_P_DEDUP_TOL = 1e-14


@dataclass(frozen=True)
class DimensionInput:
    """Diagonal entries, the determinant-sum value, and the overspeed s."""

    lambdas: tuple[float, ...]
    lambda_a: float
    s: float

    def __post_init__(self) -> None:
        if len(self.lambdas) < 1:
            raise ValueError("need at least one diagonal entry")
        if any(not 0.0 < v < 0.5 for v in self.lambdas):
            raise ValueError("every diagonal entry must lie in (0, 1/2)")
        if self.lambda_a <= 1.0:
            raise ValueError("lambda(A) must exceed 1")
        if self.s <= 1.0:
            raise ValueError(
                "the bound requires s > 1; at s = 1 the axis partition degenerates")

    @property
    def dimension(self) -> int:
        return len(self.lambdas)


@dataclass(frozen=True)
class DimensionResult:
    """Minimum value plus the minimizing exponent and its axis partition.

    Axis indices are 0-based positions into the input diagonal entries.
    """

    value: float
    p_star: float
    k1: tuple[int, ...]
    k2: tuple[int, ...]
    k3: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "p_star": self.p_star,
            "K1": list(self.k1),
            "K2": list(self.k2),
            "K3": list(self.k3),
        }


def axis_exponents(inp: DimensionInput) -> list[float]:
    """a_i = log(lambda_i) / log(lambda(A)^{-1}) + 1/d."""
    log_inv = -math.log(inp.lambda_a)
    return [math.log(v) / log_inv + 1.0 / inp.dimension for v in inp.lambdas]


def _partition(a: list[float], shift: float, p: float
               ) -> tuple[list[int], list[int], list[int]]:
    k1 = [i for i, ai in enumerate(a) if ai >= p]
    k2 = [i for i, ai in enumerate(a) if ai + shift <= p]
    k3 = [i for i in range(len(a)) if i not in k1 and i not in k2]
    return k1, k2, k3


def dim_lower_bound(inp: DimensionInput) -> DimensionResult:
    """Evaluate the dimension lower bound and return the minimizing witness.

    Ties in the minimum resolve to the smallest p.  The partition is
    asserted to be exact for every candidate, and the value is asserted to
    lie in [0, d]; violations raise ConsistencyError rather than clamping.
    """
    d = inp.dimension
    s = inp.s
    a = axis_exponents(inp)
    shift = (s - 1.0) / d
    log_inv = -math.log(inp.lambda_a)

    candidates = sorted(set(a) | {ai + shift for ai in a})
    deduped: list[float] = []
    for p in candidates:
        if not deduped or p - deduped[-1] > _P_DEDUP_TOL:
            deduped.append(p)

    best: DimensionResult | None = None
    for p in deduped:
        k1, k2, k3 = _partition(a, shift, p)
        if set(k1) & set(k2):
            raise ConsistencyError(
                f"K1 and K2 overlap at p={p}; impossible for s > 1")
        if len(k1) + len(k2) + len(k3) != d:
            raise ConsistencyError(f"axis partition does not cover 1..{d}")
        value = (len(k1)
                 + len(k2) * (1.0 - (s - 1.0) / (d * p))
                 + len(k3) / (d * p)
                 + sum(math.log(inp.lambdas[i]) for i in k3) / (p * log_inv))
        # candidates ascend, so strict improvement keeps the smallest p on ties
        if best is None or value < best.value:
            best = DimensionResult(value, p, tuple(k1), tuple(k2), tuple(k3))
    assert best is not None
    if not -1e-9 <= best.value <= d + 1e-9:
        raise ConsistencyError(
            f"dimension bound {best.value} escapes [0, {d}]")
    return best


def isotropic_closed_form(lam: float, lambda_a: float, s: float, d: int) -> float:
    """d - (s-1)/(a + (s-1)/d) with a the common axis exponent."""
    a = math.log(lam) / -math.log(lambda_a) + 1.0 / d
    return d - (s - 1.0) / (a + (s - 1.0) / d)


def one_dim_closed_form(lam: float, lambda_a: float, s: float) -> float:
    """1 - (s-1)/(a_1 + s - 1)."""
    a1 = math.log(lam) / -math.log(lambda_a) + 1.0
    return 1.0 - (s - 1.0) / (a1 + s - 1.0)


class DichotomyVerdict(Enum):
    ZERO_MEASURE = "ZeroMeasure"
    FULL_MEASURE = "FullMeasure"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class DichotomyInput:
    """Hausdorff exponent s in (0, 1] and a bounded decay profile h."""

    s: float
    h: HFamily

    def __post_init__(self) -> None:
        if self.s <= 0.0:
            raise ValueError("s must be positive")
        if self.s > 1.0:
            raise ValueError(
                "s > 1 is vacuous in ambient dimension 1: every set has zero "
                "H^s measure, so the dichotomy carries no content")
        if self.h.kind is HKind.POWER_LAW and self.h.alpha < 0:
            raise ValueError("the criterion requires bounded h")


def garsia_hausdorff_criterion(inp: DichotomyInput) -> DichotomyVerdict:
    """Classify sum 2^{n(1-s)} h(n)^s: convergent -> zero measure, divergent -> full.

    Exact for the closed-form families: a positive constant always diverges
    on (0, 1]; a power law c n^{-alpha} diverges at s = 1 iff alpha <= 1,
    and for s < 1 the exponential factor dominates any polynomial decay.
    Custom tabulated families are never classified.
    """
    h = inp.h
    s = inp.s
    if h.kind is HKind.CUSTOM:
        return DichotomyVerdict.UNDECIDED
    if h.kind is HKind.CONSTANT:
        if h.c == 0.0:
            return DichotomyVerdict.ZERO_MEASURE
        return DichotomyVerdict.FULL_MEASURE
    # power law
    if h.c == 0.0:
        return DichotomyVerdict.ZERO_MEASURE
    if s < 1.0:
        return DichotomyVerdict.FULL_MEASURE
    return (DichotomyVerdict.FULL_MEASURE if h.alpha <= 1.0
            else DichotomyVerdict.ZERO_MEASURE)
