"""Exact Garsia-number certification and brute-force separation oracles.

A Garsia number is an algebraic integer beta in (1,2) with norm +-2 whose
Galois conjugates all have modulus > 1.  For lambda = 1/beta the level-n
periodic points of the pair {lambda x, lambda x + 1} stay separated by
C / 2^n; the separation minimum is computed here by exhaustive enumeration
over signed difference vectors, together with the uniform atom measures
whose weak-star limit is the Bernoulli convolution.

All polynomial coefficient arithmetic uses Python integers exactly;
floating point only enters through numerical root finding.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BudgetError

#: Roots whose modulus is within this margin of a decision boundary make the
#: verdict Inconclusive rather than a mathematical claim.
UNIT_CIRCLE_MARGIN = 1e-9

MAX_GARSIA_DEGREE = 12
MAX_SEPARATION_LEVEL = 16
DEFAULT_ATOM_BUDGET = 2 ** 24


@dataclass(frozen=True)
class IntPolynomial:
    """Integer-coefficient polynomial, leading coefficient first."""

    coefficients: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.coefficients) < 2:
            raise ValueError("degree must be at least 1")
        if self.coefficients[0] == 0:
            raise ValueError("leading coefficient must be nonzero")
        if any(not isinstance(c, int) for c in self.coefficients):
            raise ValueError("coefficients must be Python ints")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def is_monic(self) -> bool:
        return self.coefficients[0] == 1

    @property
    def constant_term(self) -> int:
        return self.coefficients[-1]

    def __call__(self, z):
        out = 0
        for c in self.coefficients:
            out = out * z + c
        return out

    def derivative_at(self, z):
        n = self.degree
        out = 0
        for k, c in enumerate(self.coefficients[:-1]):
            out = out * z + (n - k) * c
        return out

    def __str__(self) -> str:
        parts = []
        n = self.degree
        for k, c in enumerate(self.coefficients):
            if c == 0:
                continue
            power = n - k
            mag = abs(c)
            if power == 0:
                term = str(mag)
            else:
                base = "x" if power == 1 else f"x^{power}"
                term = base if mag == 1 else f"{mag}{base}"
            parts.append(("-" if c < 0 else "+", term))
        if not parts:
            return "0"
        sign, term = parts[0]
        text = ("-" if sign == "-" else "") + term
        for sign, term in parts[1:]:
            text += sign + term
        return text


_TERM_RE = re.compile(
    r"^([+-]?)(\d+)?(?:\*?(x)(?:\^(\d+))?)?$")


def parse_polynomial(text: str) -> IntPolynomial:
    """Parse strings like "x^6+x^5-x-2" into an IntPolynomial."""
    stripped = text.replace(" ", "")
    if not stripped:
        raise ValueError("empty polynomial string")
    # split keeping signs attached to each term
    chunks = re.findall(r"[+-]?[^+-]+", stripped)
    coeffs: dict[int, int] = {}
    for chunk in chunks:
        m = _TERM_RE.match(chunk)
        if not m or (m.group(2) is None and m.group(3) is None):
            raise ValueError(f"cannot parse term {chunk!r} in {text!r}")
        sign = -1 if m.group(1) == "-" else 1
        mag = int(m.group(2)) if m.group(2) is not None else 1
        if m.group(3) is None:
            power = 0
        elif m.group(4) is not None:
            power = int(m.group(4))
        else:
            power = 1
        coeffs[power] = coeffs.get(power, 0) + sign * mag
    degree = max(coeffs)
    return IntPolynomial(tuple(coeffs.get(p, 0) for p in range(degree, -1, -1)))


def poly_from_list(values) -> IntPolynomial:
    return IntPolynomial(tuple(int(v) for v in values))


def _divmod_by_monic(num: tuple[int, ...], den: tuple[int, ...]
                     ) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Exact polynomial division by a monic integer polynomial."""
    assert den[0] == 1
    rem = list(num)
    dn = len(den) - 1
    quot = []
    for i in range(len(num) - dn):
        lead = rem[i]
        quot.append(lead)
        if lead:
            for j in range(1, dn + 1):
                rem[i + j] -= lead * den[j]
    return tuple(quot), tuple(rem[len(num) - dn:])


def polish_roots(p: IntPolynomial, roots: np.ndarray,
                 iterations: int = 8) -> np.ndarray:
    """Newton refinement against the exact integer coefficients."""
    out = np.array(roots, dtype=complex)
    for k, z in enumerate(out):
        for _ in range(iterations):
            dz = p.derivative_at(z)
            if dz == 0:
                break
            step = p(z) / dz
            z = z - step
            if abs(step) < 1e-15 * max(1.0, abs(z)):
                break
        out[k] = z
    return out


def roots_of(p: IntPolynomial) -> np.ndarray:
    """All complex roots via the balanced companion matrix, Newton-polished."""
    raw = np.roots(np.array(p.coefficients, dtype=float))
    return polish_roots(p, raw)


class Irreducibility(Enum):
    CERTIFIED = "Certified"
    NOT_CERTIFIED = "NotCertified"


class GarsiaVerdict(Enum):
    GARSIA = "Garsia"
    NOT_GARSIA = "NotGarsia"
    INCONCLUSIVE = "Inconclusive"


def find_integer_factor(p: IntPolynomial,
                        roots: np.ndarray | None = None
                        ) -> IntPolynomial | None:
    """Search for a proper monic integer factor by divisor reconstruction.

    For each proper nonempty subset of the numeric roots, form the monic
    product, round the coefficients to integers, and test exact division.
    Since p is monic, Gauss's lemma reduces any rational factorization to
    monic integer factors, so exhausting the subsets is a proof either way.
    """
    if not p.is_monic:
        raise ValueError("factor search requires a monic polynomial")
    if roots is None:
        roots = roots_of(p)
    n = p.degree
    for mask in range(1, 2 ** n - 1):
        subset = [roots[i] for i in range(n) if mask >> i & 1]
        coeffs = np.poly(subset)
        if np.max(np.abs(coeffs.imag)) > 1e-6:
            continue
        rounded = np.rint(coeffs.real)
        if np.max(np.abs(coeffs.real - rounded)) > 1e-6:
            continue
        candidate = tuple(int(c) for c in rounded)
        if candidate[0] != 1:
            continue
        quot, rem = _divmod_by_monic(p.coefficients, candidate)
        if all(r == 0 for r in rem):
            return IntPolynomial(candidate)
    return None


@dataclass
class GarsiaReport:
    """Outcome of the Garsia-number checks for one monic integer polynomial."""

    polynomial: IntPolynomial
    constant_term: int
    real_root_in_1_2: float | None
    conjugate_moduli: list[float]
    min_conjugate_modulus: float | None
    irreducibility: Irreducibility
    verdict: GarsiaVerdict
    factor: IntPolynomial | None = None
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "polynomial": str(self.polynomial),
            "coefficients": list(self.polynomial.coefficients),
            "constant_term": self.constant_term,
            "real_root_in_1_2": self.real_root_in_1_2,
            "conjugate_moduli": self.conjugate_moduli,
            "min_conjugate_modulus": self.min_conjugate_modulus,
            "irreducibility": self.irreducibility.value,
            "verdict": self.verdict.value,
            "factor": None if self.factor is None else str(self.factor),
            "notes": self.notes,
        }


def is_garsia(p: IntPolynomial, certify: bool = True) -> GarsiaReport:
    """Classify a monic integer polynomial as Garsia / NotGarsia / Inconclusive.

    Garsia requires: |constant term| = 2, exactly one real root in (1,2),
    every other root of modulus > 1, and certified irreducibility.  A root
    within UNIT_CIRCLE_MARGIN of a decision boundary is never resolved
    numerically; the verdict becomes Inconclusive instead.
    """
    if not p.is_monic:
        raise ValueError("Garsia candidates must be monic")
    if not 1 <= p.degree <= MAX_GARSIA_DEGREE:
        raise ValueError(
            f"unsupported degree {p.degree}; supported range is 1..{MAX_GARSIA_DEGREE}")

    notes: list[str] = []
    roots = roots_of(p)
    margin = UNIT_CIRCLE_MARGIN

    # distinguished real root in (1,2)
    beta_index = None
    boundary_ambiguous = False
    for i, z in enumerate(roots):
        if abs(z.imag) > margin:
            continue
        x = z.real
        if 1 + margin < x < 2 - margin:
            if beta_index is None:
                beta_index = i
            else:
                # two real roots inside (1,2): cannot be irreducible anyway
                notes.append("multiple real roots in (1,2)")
        elif abs(x - 1) <= margin or abs(x - 2) <= margin:
            boundary_ambiguous = True
            notes.append(f"real root {x!r} within margin of the interval boundary")

    beta = None if beta_index is None else float(roots[beta_index].real)
    moduli = [float(abs(z)) for i, z in enumerate(roots) if i != beta_index]
    min_modulus = min(moduli) if moduli else None

    factor = find_integer_factor(p, roots) if certify else None
    if certify:
        irreducibility = (Irreducibility.NOT_CERTIFIED if factor is not None
                          else Irreducibility.CERTIFIED)
    else:
        irreducibility = Irreducibility.NOT_CERTIFIED
        notes.append("irreducibility certification skipped")

    report = GarsiaReport(
        polynomial=p,
        constant_term=p.constant_term,
        real_root_in_1_2=beta,
        conjugate_moduli=moduli,
        min_conjugate_modulus=min_modulus,
        irreducibility=irreducibility,
        verdict=GarsiaVerdict.INCONCLUSIVE,
        factor=factor,
        notes=notes,
    )

    # definite violations first
    if abs(p.constant_term) != 2:
        notes.append(f"|constant term| = {abs(p.constant_term)} != 2")
        report.verdict = GarsiaVerdict.NOT_GARSIA
        return report
    if factor is not None:
        notes.append(f"factors exactly as ({factor}) * (...)")
        report.verdict = GarsiaVerdict.NOT_GARSIA
        return report
    if min_modulus is not None and min_modulus <= 1 - margin:
        notes.append(f"conjugate of modulus {min_modulus} <= 1")
        report.verdict = GarsiaVerdict.NOT_GARSIA
        return report
    if beta is None and not boundary_ambiguous:
        notes.append("no real root in (1,2)")
        report.verdict = GarsiaVerdict.NOT_GARSIA
        return report

    # ambiguity gates
    if boundary_ambiguous:
        return report
    if min_modulus is not None and min_modulus < 1 + margin:
        notes.append("conjugate modulus within margin of the unit circle")
        return report
    if irreducibility is not Irreducibility.CERTIFIED:
        return report

    report.verdict = GarsiaVerdict.GARSIA
    return report


def garsia_lambda(p: IntPolynomial) -> float:
    """Reciprocal of the certified Garsia root; raises unless verdict is Garsia."""
    report = is_garsia(p)
    if report.verdict is not GarsiaVerdict.GARSIA:
        raise ValueError(f"{p} is not certified Garsia ({report.verdict.value})")
    return 1.0 / report.real_root_in_1_2


# -- separation statistics ----------------------------------------------


def sign_canonical_count(n: int) -> int:
    """Number of nonzero {-1,0,1}^n vectors whose first nonzero entry is +1."""
    return (3 ** n - 1) // 2


def separation_scan(lam: float, n: int) -> tuple[float, int]:
    """Min over sign-canonical nonzero c of |sum_i c_i lam^{i-1}|, plus the count.

    Enumerates by the position k of the first nonzero entry: the candidate
    values are |lam^{k-1} + lam^k * v| with v ranging over every signed sum
    of the remaining n-k digits.  The signed-sum arrays are built level by
    level, so the largest array held is 3^{n-1} floats.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lambda must lie in (0,1)")
    if n < 1:
        raise ValueError("need n >= 1")
    if n > MAX_SEPARATION_LEVEL:
        raise BudgetError(
            f"separation enumeration at n={n} exceeds the level budget "
            f"{MAX_SEPARATION_LEVEL} (3^n vectors)")
    best = np.inf
    evaluated = 0
    level = np.zeros(1)  # signed sums over zero digits
    for j in range(n):
        k = n - j  # first nonzero entry at position k uses tails of length j
        candidates = np.abs(lam ** (k - 1) + lam ** k * level)
        best = min(best, float(candidates.min()))
        evaluated += level.size
        if j < n - 1:
            step = lam ** j
            level = np.concatenate((level - step, level, level + step))
    assert evaluated == sign_canonical_count(n)
    return best, evaluated


def separation_min(lam: float, n: int) -> float:
    """Smallest nonzero |signed polynomial in lam| over length-n digit vectors."""
    return separation_scan(lam, n)[0]


def periodic_separation(lam: float, n: int) -> float:
    """Exact minimal gap between distinct level-n periodic projection points.

    Distinct a, a' in {0,1}^n give |pi(a^inf) - pi(a'^inf)| =
    |sum (a_i - a'_i) lam^{i-1}| / (1 - lam^n).
    """
    return separation_min(lam, n) / (1.0 - lam ** n)


# -- Bernoulli convolution atoms -----------------------------------------


@dataclass
class AtomMeasure:
    """Uniform measure on the level-n periodic points of {lam x, lam x + 1}."""

    level: int
    lam: float
    locations: np.ndarray  # lex order over the binary words
    weight: float

    @property
    def support_width(self) -> float:
        return 1.0 / (1.0 - self.lam)

    def min_gap(self) -> float:
        xs = np.sort(self.locations)
        return float(np.min(np.diff(xs)))


def bernoulli_atoms(lam: float, n: int,
                    budget: int = DEFAULT_ATOM_BUDGET) -> AtomMeasure:
    """Atoms at pi(a^inf) = (sum a_i lam^{i-1}) / (1 - lam^n), a in {0,1}^n."""
    if not 0.5 < lam < 1.0:
        raise ValueError("lambda must lie in (1/2, 1)")
    if n < 1:
        raise ValueError("need n >= 1")
    if 2 ** n > budget:
        raise BudgetError(f"2^{n} atoms exceed the atom budget {budget}")
    codes = np.arange(2 ** n, dtype=np.int64)
    locations = np.zeros(2 ** n)
    for i in range(n):
        # lex order: a_1 is the most significant bit
        bit = (codes >> (n - 1 - i)) & 1
        locations += bit * lam ** i
    locations /= (1.0 - lam ** n)
    return AtomMeasure(level=n, lam=lam, locations=locations, weight=2.0 ** -n)


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def total_mass(self) -> float:
        return float(np.sum(self.density) * self.bin_width)


def empirical_density(atoms: AtomMeasure, bins: int) -> Histogram:
    """Histogram density of the atom measure over [0, 1/(1-lam)]."""
    if bins < 1:
        raise ValueError("need at least one bin")
    mass, edges = np.histogram(
        atoms.locations, bins=bins, range=(0.0, atoms.support_width),
        weights=np.full(atoms.locations.size, atoms.weight))
    width = edges[1] - edges[0]
    return Histogram(edges=edges, density=mass / width)
