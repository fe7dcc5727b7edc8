"""Word algebra, affine-map composition, projections and resolvents.

An affine IFS is a finite family of invertible contractions
S_i(x) = A_i x + t_i on R^d.  Finite words over the alphabet index
compositions S_w = S_{w_1} o ... o S_{w_n}; eventually periodic symbol
sequences project to exact points of the attractor (the fixed point of the
periodic part, pushed forward by the preperiod).  Everything here is pure
and deterministic, so the module is safe for concurrent use.

Words are plain tuples of ints.  Concatenation is tuple addition and
reversal is ``w[::-1]``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import BudgetError

Word = tuple[int, ...]

#: Default cap on the number of words a single enumeration may yield.
DEFAULT_WORD_BUDGET = 2 ** 24

#: Power-iteration tolerance and cap for operator norms.
_NORM_TOL = 1e-10
_NORM_MAX_ITER = 10_000


def operator_norm(matrix: np.ndarray) -> float:
    """Largest singular value, by power iteration on M^T M."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    gram = m.T @ m
    v = np.ones(m.shape[0])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(_NORM_MAX_ITER):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        if abs(norm - prev) <= _NORM_TOL * max(1.0, norm):
            break
        prev = norm
    return float(np.sqrt(norm))


@dataclass(frozen=True)
class SymbolicSequence:
    """The infinite symbol string preperiod . period . period . ...

    The period must be nonempty; the preperiod may be empty.  This is the
    only sequence representation `project` accepts, because it is the one
    that admits an exact (linear-solve) projection.  Arbitrary sequences
    are handled by truncation, see `project_truncated`.
    """

    preperiod: Word
    period: Word

    def __post_init__(self) -> None:
        if len(self.period) < 1:
            raise ValueError("period must be nonempty")

    def prefix(self, length: int) -> Word:
        """First `length` symbols of the infinite string."""
        out = list(self.preperiod)
        while len(out) < length:
            out.extend(self.period)
        return tuple(out[:length])

    def prepend(self, w: Word) -> "SymbolicSequence":
        return SymbolicSequence(tuple(w) + self.preperiod, self.period)


def constant_sequence(symbol: int) -> SymbolicSequence:
    return SymbolicSequence((), (symbol,))


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x -> matrix @ x + translation on R^d."""

    matrix: np.ndarray
    translation: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.matrix @ x + self.translation
        # batch of points, shape (k, d)
        return x @ self.matrix.T + self.translation

    def compose(self, other: "AffineMap") -> "AffineMap":
        """self o other."""
        return AffineMap(self.matrix @ other.matrix,
                         self.matrix @ other.translation + self.translation)

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(inv, -inv @ self.translation)

    def fixed_point(self) -> np.ndarray:
        """The unique x with self(x) = x (requires spectral radius < 1)."""
        d = self.dimension
        system = np.eye(d) - self.matrix
        return np.linalg.solve(system, self.translation)


def affine_map(matrix, translation) -> AffineMap:
    """Build a validated AffineMap from array-likes (scalars allowed at d=1)."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    t = np.atleast_1d(np.asarray(translation, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got shape {m.shape}")
    if t.shape != (m.shape[0],):
        raise ValueError(f"translation shape {t.shape} does not match d={m.shape[0]}")
    if abs(np.linalg.det(m)) <= 1e-15:
        raise ValueError("matrix must be invertible")
    return AffineMap(m, t)


class AffineIFS:
    """A finite family of affine contractions sharing one dimension.

    `strict` mode additionally enforces operator norm < 1/2 on every
    generator, which the transversality-based operations require.
    """

    def __init__(self, maps: Sequence[AffineMap], strict: bool = False):
        if not maps:
            raise ValueError("an IFS needs at least one map")
        d = maps[0].dimension
        limit = 0.5 if strict else 1.0
        for i, s in enumerate(maps):
            if s.dimension != d:
                raise ValueError("all maps must share one dimension")
            if abs(np.linalg.det(s.matrix)) <= 1e-15:
                raise ValueError(f"map {i} has a singular matrix")
            norm = operator_norm(s.matrix)
            if norm >= limit:
                raise ValueError(
                    f"map {i} has operator norm {norm:.6g} >= {limit} "
                    f"({'strict' if strict else 'general'} contractivity)")
        self.maps: tuple[AffineMap, ...] = tuple(maps)
        self.dimension = d
        self.alphabet_size = len(maps)
        self.strict = strict
        self.lambda_value = float(
            sum(abs(np.linalg.det(s.matrix)) for s in maps))

    # -- word validation -------------------------------------------------

    def check_word(self, w: Word) -> Word:
        w = tuple(int(i) for i in w)
        if len(w) < 1:
            raise ValueError("word must be nonempty")
        for i in w:
            if not 0 <= i < self.alphabet_size:
                raise IndexError(
                    f"symbol {i} out of range for alphabet size {self.alphabet_size}")
        return w

    def require_strict(self) -> None:
        """Fail unless every generator has norm < 1/2."""
        for i, s in enumerate(self.maps):
            norm = operator_norm(s.matrix)
            if norm >= 0.5:
                raise ValueError(
                    f"operation requires operator norm < 1/2 on every map; "
                    f"map {i} has norm {norm:.6g}")

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "d": self.dimension,
            "maps": [{"A": s.matrix.tolist(), "t": s.translation.tolist()}
                     for s in self.maps],
        }

    @classmethod
    def from_dict(cls, payload: dict, strict: bool = False) -> "AffineIFS":
        d = int(payload["d"])
        maps = []
        for entry in payload["maps"]:
            m = affine_map(entry["A"], entry["t"])
            if m.dimension != d:
                raise ValueError("map dimension disagrees with declared d")
            maps.append(m)
        return cls(maps, strict=strict)

    @classmethod
    def from_json(cls, text: str, strict: bool = False) -> "AffineIFS":
        return cls.from_dict(json.loads(text), strict=strict)


def ifs_from_rows(rows: Iterable[tuple], d: int | None = None,
                  strict: bool = False) -> AffineIFS:
    """Convenience constructor from (matrix, translation) pairs."""
    return AffineIFS([affine_map(m, t) for m, t in rows], strict=strict)


def lambda_value(ifs: AffineIFS) -> float:
    """Sum over generators of |det A_i| (recomputed, not the cache)."""
    return float(sum(abs(np.linalg.det(s.matrix)) for s in ifs.maps))


def compose_word(ifs: AffineIFS, w: Word) -> AffineMap:
    """S_w = S_{w_1} o ... o S_{w_n}."""
    w = ifs.check_word(w)
    out = ifs.maps[w[0]]
    for i in w[1:]:
        out = out.compose(ifs.maps[i])
    return out


def inverse_map(ifs: AffineIFS, w: Word) -> AffineMap:
    """T_w = T_{w_1} o ... o T_{w_n} with T_i = S_i^{-1}.

    Satisfies inverse_map(reverse(w)) o compose_word(w) = identity.
    """
    w = ifs.check_word(w)
    out = ifs.maps[w[0]].inverse()
    for i in w[1:]:
        out = out.compose(ifs.maps[i].inverse())
    return out


def periodic_fixed_point(ifs: AffineIFS, w: Word) -> np.ndarray:
    """The unique x with S_w(x) = x, from (I - A_w) x = translation of S_w."""
    s = compose_word(ifs, w)
    system = np.eye(ifs.dimension) - s.matrix
    if abs(np.linalg.det(system)) <= 1e-300:
        raise ArithmeticError("I - A_w is numerically singular")
    return np.linalg.solve(system, s.translation)


def project(ifs: AffineIFS, seq: SymbolicSequence) -> np.ndarray:
    """Exact projection of an eventually periodic sequence.

    project(prefix . p^inf) = S_prefix(fixed point of S_p).
    """
    x = periodic_fixed_point(ifs, seq.period)
    if seq.preperiod:
        x = compose_word(ifs, seq.preperiod)(x)
    return x


def project_truncated(ifs: AffineIFS, symbols: Sequence[int],
                      depth: int | None = None) -> np.ndarray:
    """Projection of an arbitrary symbol sequence by truncation.

    Returns S_{w_1..w_k}(0) for k = min(depth, len(symbols)); the error
    against the infinite series is at most max_i ||A_i||^k * diam(X).
    """
    k = len(symbols) if depth is None else min(depth, len(symbols))
    if k < 1:
        raise ValueError("need at least one symbol")
    return compose_word(ifs, tuple(symbols[:k]))(np.zeros(ifs.dimension))


def neumann_resolvent(ifs: AffineIFS, w: Word) -> np.ndarray:
    """(A_w^{-1} - I)^{-1}, which equals the series sum_{l>=1} A_w^l."""
    a = compose_word(ifs, w).matrix
    system = np.linalg.inv(a) - np.eye(ifs.dimension)
    return np.linalg.inv(system)


def resolvent_of_matrix(a: np.ndarray) -> np.ndarray:
    """(a^{-1} - I)^{-1} for a single contraction matrix."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return np.linalg.inv(np.linalg.inv(a) - np.eye(a.shape[0]))


def common_prefix_length(w1: Word, w2: Word) -> int:
    """1-based index of the first position where two equal-length words differ."""
    if len(w1) != len(w2):
        raise ValueError("words must have equal length")
    for k, (a, b) in enumerate(zip(w1, w2)):
        if a != b:
            return k + 1
    raise ValueError("words are equal; the split index is undefined")


def word_count(m: int, n: int) -> int:
    return m ** n


def enumerate_words(m: int, n: int,
                    budget: int = DEFAULT_WORD_BUDGET) -> Iterator[Word]:
    """All words in [0,m)^n in lexicographic order."""
    if m < 1 or n < 1:
        raise ValueError("need m >= 1 and n >= 1")
    total = m ** n
    if total > budget:
        raise BudgetError(
            f"enumerating {m}^{n} = {total} words exceeds the word budget {budget}")
    return itertools.product(range(m), repeat=n)


def word_at_index(index: int, m: int, n: int) -> Word:
    """The word at a lexicographic position, decoded base m."""
    if not 0 <= index < m ** n:
        raise ValueError(f"index {index} outside [0, {m}^{n})")
    out = []
    for _ in range(n):
        out.append(index % m)
        index //= m
    return tuple(reversed(out))


def words_in_range(m: int, n: int, start: int, stop: int,
                   budget: int = DEFAULT_WORD_BUDGET) -> Iterator[Word]:
    """Lexicographic slice [start, stop); lets callers partition enumeration."""
    if not 0 <= start <= stop <= m ** n:
        raise ValueError("need 0 <= start <= stop <= m^n")
    if stop - start > budget:
        raise BudgetError(
            f"range of {stop - start} words exceeds the word budget {budget}")
    if start == stop:
        return
    word = list(word_at_index(start, m, n))
    for _ in range(start, stop):
        yield tuple(word)
        k = n - 1
        while k >= 0 and word[k] == m - 1:
            word[k] = 0
            k -= 1
        if k >= 0:
            word[k] += 1


def word_affine_arrays(ifs: AffineIFS, n: int,
                       budget: int = DEFAULT_WORD_BUDGET
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Matrices and translations of S_w for every w in I^n, in lex order.

    Returns (mats, trans) with shapes (m^n, d, d) and (m^n, d).  Built by
    extending words on the right: S_{w.i} has matrix A_w A_i and translation
    A_w t_i + t_w, which keeps the stacking in lexicographic order.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    m, d = ifs.alphabet_size, ifs.dimension
    total = m ** n
    if total > budget:
        raise BudgetError(
            f"materializing {m}^{n} = {total} word maps exceeds the word budget {budget}")
    gen_mats = np.stack([s.matrix for s in ifs.maps])
    gen_trans = np.stack([s.translation for s in ifs.maps])
    mats = gen_mats.copy()
    trans = gen_trans.copy()
    for _ in range(n - 1):
        # (k, 1, d, d) @ (m, d, d) -> (k, m, d, d)
        new_mats = np.einsum("kab,ibc->kiac", mats, gen_mats)
        new_trans = np.einsum("kab,ib->kia", mats, gen_trans) + trans[:, None, :]
        mats = new_mats.reshape(-1, d, d)
        trans = new_trans.reshape(-1, d)
    return mats, trans


class RegularityVerdict(Enum):
    """Outcome of the sufficient-condition checks for differentiation regularity."""

    ALL_EQUAL_2D = "AllEqual2D"
    SIMULTANEOUSLY_DIAGONALIZABLE = "SimultaneouslyDiagonalizable"
    UNKNOWN = "Unknown"


def shmerkin_sufficient(ifs: AffineIFS) -> RegularityVerdict:
    """Restricted sufficient test for a differentiation-regular attractor.

    Certifies only the two easy cases: d=2 with all matrices equal, and all
    matrices diagonal.  UNKNOWN means "not certified", never "not regular".
    """
    mats = [s.matrix for s in ifs.maps]
    if ifs.dimension == 2:
        first = mats[0]
        if all(np.max(np.abs(m - first)) <= 1e-12 for m in mats[1:]):
            return RegularityVerdict.ALL_EQUAL_2D
    if all(np.max(np.abs(m - np.diag(np.diag(m)))) <= 1e-12 for m in mats):
        return RegularityVerdict.SIMULTANEOUSLY_DIAGONALIZABLE
    return RegularityVerdict.UNKNOWN


def equal_diagonal_matrix(ifs: AffineIFS) -> np.ndarray | None:
    """The shared positive diagonal matrix, if every generator equals it."""
    first = ifs.maps[0].matrix
    for s in ifs.maps[1:]:
        if np.max(np.abs(s.matrix - first)) > 1e-12:
            return None
    if np.max(np.abs(first - np.diag(np.diag(first)))) > 1e-12:
        return None
    if np.any(np.diag(first) <= 0):
        return None
    return first
