"""Finite-stage limsup sets as unions of placed bodies, and their measures.

A stage set at level n is a union of m^n convex symmetric bodies, one per
word: images of a shrinking target under the word maps, or recurrence
neighbourhoods around periodic points.  Measures are estimated on pixel
grids (dimension 1 or 2) with a center-sampling rule, and the classical
lower bounds (Kochen-Stone, Bonferroni) are evaluated on the resulting
intersection tables.  Zero-measure diagnostics (exact overlaps, narrow
product rectangles, convergent bounding series) live here too.

Rasterization convention: a cell is occupied iff its center lies in some
body (closed membership); the reported error estimate is the number of
cells whose corners disagree about membership in the union, times the
cell volume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetError
from .ifs_core import (
    AffineIFS,
    SymbolicSequence,
    Word,
    compose_word,
    equal_diagonal_matrix,
    project,
    resolvent_of_matrix,
    word_affine_arrays,
)

DEFAULT_CELL_BUDGET = 2 ** 26
DEFAULT_PAIR_BUDGET = 2 ** 26
OVERLAP_TOL = 1e-9
MAX_RESOLUTION = 2 ** 20


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


# -- shapes and placed bodies ---------------------------------------------


@dataclass(frozen=True, eq=False)
class Ball:
    radius: float


@dataclass(frozen=True, eq=False)
class Box:
    halfwidths: np.ndarray


@dataclass(frozen=True, eq=False)
class LinearImageBall:
    """Image of the closed ball B(0, radius) under an invertible matrix."""

    matrix: np.ndarray
    radius: float


Shape = Ball | Box | LinearImageBall


@dataclass(frozen=True, eq=False)
class PlacedBody:
    """A convex symmetric shape translated to a center point."""

    center: np.ndarray
    shape: Shape

    @property
    def dimension(self) -> int:
        return self.center.shape[0]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed membership test for a (k, d) array of points."""
        delta = np.atleast_2d(points) - self.center
        s = self.shape
        if isinstance(s, Ball):
            return np.einsum("kd,kd->k", delta, delta) <= s.radius ** 2
        if isinstance(s, Box):
            return np.all(np.abs(delta) <= s.halfwidths, axis=1)
        pulled = delta @ np.linalg.inv(s.matrix).T
        return np.einsum("kd,kd->k", pulled, pulled) <= s.radius ** 2

    def volume(self) -> float:
        d = self.dimension
        s = self.shape
        if isinstance(s, Ball):
            return unit_ball_volume(d) * s.radius ** d
        if isinstance(s, Box):
            return float(np.prod(2.0 * s.halfwidths))
        return abs(np.linalg.det(s.matrix)) * unit_ball_volume(d) * s.radius ** d

    def bounding_halfwidths(self) -> np.ndarray:
        s = self.shape
        if isinstance(s, Ball):
            return np.full(self.dimension, s.radius)
        if isinstance(s, Box):
            return np.asarray(s.halfwidths, dtype=float)
        # extent of {M u : |u| <= r} along axis k is r * ||row_k(M)||
        return s.radius * np.linalg.norm(s.matrix, axis=1)

    def interval(self) -> tuple[float, float]:
        """Endpoints, valid only in dimension 1 where every shape is an interval."""
        if self.dimension != 1:
            raise ValueError("interval() requires dimension 1")
        half = float(self.bounding_halfwidths()[0])
        return float(self.center[0]) - half, float(self.center[0]) + half


def placed_ball(center, radius: float) -> PlacedBody:
    if radius <= 0:
        raise ValueError("radius must be positive")
    return PlacedBody(np.atleast_1d(np.asarray(center, dtype=float)), Ball(radius))


def placed_box(center, halfwidths) -> PlacedBody:
    hw = np.atleast_1d(np.asarray(halfwidths, dtype=float))
    if np.any(hw <= 0):
        raise ValueError("halfwidths must be positive")
    return PlacedBody(np.atleast_1d(np.asarray(center, dtype=float)), Box(hw))


def placed_linear_ball(center, matrix, radius: float) -> PlacedBody:
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if radius <= 0:
        raise ValueError("radius must be positive")
    if abs(np.linalg.det(m)) <= 1e-300:
        raise ValueError("matrix must be invertible")
    return PlacedBody(np.atleast_1d(np.asarray(center, dtype=float)),
                      LinearImageBall(m, radius))


def analytic_total_volume(bodies: Sequence[PlacedBody]) -> float:
    """Sum of body volumes; the only measure proxy available above d=2."""
    return float(sum(b.volume() for b in bodies))


# -- windows and pixel masks ----------------------------------------------


@dataclass(frozen=True, eq=False)
class Window:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("window bounds must be matching vectors")
        if np.any(self.hi <= self.lo):
            raise ValueError("window must have positive extent on every axis")

    @property
    def dimension(self) -> int:
        return self.lo.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    def volume(self) -> float:
        return float(np.prod(self.widths))


def window(lo, hi) -> Window:
    return Window(np.atleast_1d(np.asarray(lo, dtype=float)),
                  np.atleast_1d(np.asarray(hi, dtype=float)))


@dataclass(eq=False)
class PixelMask:
    """Occupancy grid over a window; the measurable proxy for Lebesgue measure."""

    window: Window
    resolution: tuple[int, ...]
    bits: np.ndarray

    @property
    def dimension(self) -> int:
        return self.window.dimension

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.window.widths / np.array(self.resolution)))

    def cell_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def measure(self) -> float:
        return self.cell_count() * self.cell_volume

    def _check_compatible(self, other: "PixelMask") -> None:
        if self.resolution != other.resolution or \
                np.any(self.window.lo != other.window.lo) or \
                np.any(self.window.hi != other.window.hi):
            raise ValueError("masks must share window and resolution")

    def intersect(self, other: "PixelMask") -> "PixelMask":
        self._check_compatible(other)
        return PixelMask(self.window, self.resolution, self.bits & other.bits)

    def union(self, other: "PixelMask") -> "PixelMask":
        self._check_compatible(other)
        return PixelMask(self.window, self.resolution, self.bits | other.bits)


def empty_mask(win: Window, resolution) -> PixelMask:
    res = _normalize_resolution(win, resolution)
    return PixelMask(win, res, np.zeros(res, dtype=bool))


def union_of_masks(masks: Sequence[PixelMask]) -> PixelMask:
    if not masks:
        raise ValueError("need at least one mask")
    out = masks[0]
    for m in masks[1:]:
        out = out.union(m)
    return out


def measure_union(mask: PixelMask) -> float:
    return mask.measure()


def _normalize_resolution(win: Window, resolution) -> tuple[int, ...]:
    d = win.dimension
    if isinstance(resolution, int):
        res = (resolution,) * d
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) != d:
        raise ValueError("resolution must give one entry per axis")
    for r in res:
        if not 2 <= r <= MAX_RESOLUTION:
            raise ValueError(f"resolution {r} outside [2, {MAX_RESOLUTION}]")
    cells = int(np.prod(res))
    if cells > DEFAULT_CELL_BUDGET:
        raise BudgetError(
            f"{cells} raster cells exceed the cell budget {DEFAULT_CELL_BUDGET}")
    return res


def _axis_cell_range(lo_b: float, hi_b: float, lo: float, h: float,
                     count: int) -> tuple[int, int]:
    """Indices i with lo_b <= lo + (i + 0.5) h <= hi_b, clamped to the grid."""
    i0 = math.ceil((lo_b - lo) / h - 0.5)
    i1 = math.floor((hi_b - lo) / h - 0.5)
    return max(i0, 0), min(i1, count - 1)


def _axis_corner_range(lo_b: float, hi_b: float, lo: float, h: float,
                       count: int) -> tuple[int, int]:
    """Corner indices j with lo_b <= lo + j h <= hi_b, clamped."""
    j0 = math.ceil((lo_b - lo) / h)
    j1 = math.floor((hi_b - lo) / h)
    return max(j0, 0), min(j1, count)


def rasterize_intervals(los: np.ndarray, his: np.ndarray, win: Window,
                        resolution) -> PixelMask:
    """Sweep rasterization of many 1D intervals at once."""
    res = _normalize_resolution(win, resolution)
    r = res[0]
    h = float(win.widths[0]) / r
    lo = float(win.lo[0])
    i0 = np.ceil((np.asarray(los) - lo) / h - 0.5).astype(np.int64)
    i1 = np.floor((np.asarray(his) - lo) / h - 0.5).astype(np.int64)
    keep = (i1 >= i0) & (i1 >= 0) & (i0 <= r - 1)
    i0 = np.clip(i0[keep], 0, r - 1)
    i1 = np.clip(i1[keep], 0, r - 1)
    diff = np.zeros(r + 1, dtype=np.int64)
    np.add.at(diff, i0, 1)
    np.add.at(diff, i1 + 1, -1)
    bits = np.cumsum(diff[:r]) > 0
    return PixelMask(win, res, bits)


def _corner_flags_1d(los: np.ndarray, his: np.ndarray, win: Window,
                     r: int) -> np.ndarray:
    h = float(win.widths[0]) / r
    lo = float(win.lo[0])
    j0 = np.ceil((np.asarray(los) - lo) / h).astype(np.int64)
    j1 = np.floor((np.asarray(his) - lo) / h).astype(np.int64)
    keep = (j1 >= j0) & (j1 >= 0) & (j0 <= r)
    j0 = np.clip(j0[keep], 0, r)
    j1 = np.clip(j1[keep], 0, r)
    diff = np.zeros(r + 2, dtype=np.int64)
    np.add.at(diff, j0, 1)
    np.add.at(diff, j1 + 1, -1)
    return np.cumsum(diff[: r + 1]) > 0


def _interval_arrays(bodies: Sequence[PlacedBody]) -> tuple[np.ndarray, np.ndarray]:
    los = np.empty(len(bodies))
    his = np.empty(len(bodies))
    for k, b in enumerate(bodies):
        los[k], his[k] = b.interval()
    return los, his


def rasterize(bodies: Sequence[PlacedBody], win: Window,
              resolution) -> PixelMask:
    """Center-sampling rasterization of a union of bodies (d = 1 or 2)."""
    mask, _ = _rasterize_impl(bodies, win, resolution, with_boundary=False)
    return mask


def rasterize_with_error(bodies: Sequence[PlacedBody], win: Window,
                         resolution) -> tuple[PixelMask, int]:
    """Rasterize and count boundary-crossed cells (corner disagreement)."""
    return _rasterize_impl(bodies, win, resolution, with_boundary=True)


def _rasterize_impl(bodies, win: Window, resolution, with_boundary: bool
                    ) -> tuple[PixelMask, int]:
    d = win.dimension
    if d > 2:
        raise ValueError(
            "rasterization supports d <= 2; use analytic_total_volume for d = 3")
    res = _normalize_resolution(win, resolution)
    if d == 1:
        if len(bodies) == 0:
            mask = empty_mask(win, res)
            return mask, 0
        los, his = _interval_arrays(bodies)
        mask = rasterize_intervals(los, his, win, res)
        boundary = 0
        if with_boundary:
            corners = _corner_flags_1d(los, his, win, res[0])
            boundary = int(np.count_nonzero(corners[:-1] != corners[1:]))
        return mask, boundary

    rx, ry = res
    hx, hy = (win.widths / np.array(res)).tolist()
    lox, loy = win.lo.tolist()
    bits = np.zeros(res, dtype=bool)
    corners = np.zeros((rx + 1, ry + 1), dtype=bool) if with_boundary else None
    centers_x = lox + (np.arange(rx) + 0.5) * hx
    centers_y = loy + (np.arange(ry) + 0.5) * hy
    corners_x = lox + np.arange(rx + 1) * hx
    corners_y = loy + np.arange(ry + 1) * hy

    for body in bodies:
        half = body.bounding_halfwidths()
        blo = body.center - half
        bhi = body.center + half
        ix0, ix1 = _axis_cell_range(blo[0], bhi[0], lox, hx, rx)
        iy0, iy1 = _axis_cell_range(blo[1], bhi[1], loy, hy, ry)
        if ix0 <= ix1 and iy0 <= iy1:
            if isinstance(body.shape, Box):
                bits[ix0:ix1 + 1, iy0:iy1 + 1] = True
            else:
                gx = centers_x[ix0:ix1 + 1]
                gy = centers_y[iy0:iy1 + 1]
                pts = np.stack(np.meshgrid(gx, gy, indexing="ij"),
                               axis=-1).reshape(-1, 2)
                inside = body.contains(pts).reshape(gx.size, gy.size)
                bits[ix0:ix1 + 1, iy0:iy1 + 1] |= inside
        if with_boundary:
            jx0, jx1 = _axis_corner_range(blo[0], bhi[0], lox, hx, rx)
            jy0, jy1 = _axis_corner_range(blo[1], bhi[1], loy, hy, ry)
            if jx0 <= jx1 and jy0 <= jy1:
                if isinstance(body.shape, Box):
                    corners[jx0:jx1 + 1, jy0:jy1 + 1] = True
                else:
                    gx = corners_x[jx0:jx1 + 1]
                    gy = corners_y[jy0:jy1 + 1]
                    pts = np.stack(np.meshgrid(gx, gy, indexing="ij"),
                                   axis=-1).reshape(-1, 2)
                    inside = body.contains(pts).reshape(gx.size, gy.size)
                    corners[jx0:jx1 + 1, jy0:jy1 + 1] |= inside

    boundary = 0
    if with_boundary:
        c00 = corners[:-1, :-1]
        c10 = corners[1:, :-1]
        c01 = corners[:-1, 1:]
        c11 = corners[1:, 1:]
        mixed = (c00 | c10 | c01 | c11) & ~(c00 & c10 & c01 & c11)
        boundary = int(np.count_nonzero(mixed))
    return PixelMask(win, res, bits), boundary


# -- intersection tables and classical bounds ------------------------------


def pairwise_intersection_counts(masks: Sequence[PixelMask]) -> np.ndarray:
    """Occupied-cell counts of pairwise intersections (exact integers)."""
    if not masks:
        raise ValueError("need at least one mask")
    for m in masks[1:]:
        masks[0]._check_compatible(m)
    n = len(masks)
    table = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        table[i, i] = masks[i].cell_count()
        for j in range(i + 1, n):
            c = int(np.count_nonzero(masks[i].bits & masks[j].bits))
            table[i, j] = table[j, i] = c
    return table


def pairwise_intersection_table(masks: Sequence[PixelMask]) -> np.ndarray:
    """Measures of pairwise intersections; diagonal holds individual measures."""
    counts = pairwise_intersection_counts(masks)
    return counts * masks[0].cell_volume


def kochen_stone_bound(table: np.ndarray) -> float:
    """(sum of diagonal)^2 / (sum of all entries); a lower bound for the union."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("table must be square")
    if np.max(np.abs(t - t.T)) > 0:
        raise ValueError("table must be symmetric")
    if np.any(t < 0):
        raise ValueError("table entries must be nonnegative")
    total = float(t.sum())
    if total == 0.0:
        raise ValueError("all-zero table: the bound is undefined")
    return float(np.trace(t)) ** 2 / total


def bonferroni_bound(table: np.ndarray) -> float:
    """Sum of measures minus the pairwise intersections; may be negative."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise ValueError("table must be square")
    upper = np.triu_indices(t.shape[0], k=1)
    return float(np.trace(t) - t[upper].sum())


# -- admissible h families -------------------------------------------------


class HKind(Enum):
    POWER_LAW = "power"
    CONSTANT = "const"
    CUSTOM = "custom"


class HMembership(Enum):
    IN_H = "InH"
    NOT_IN_H = "NotInH"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class HFamily:
    """A decay profile h : N -> [0, inf) with an admissibility tag.

    Only two tags are automatic: PowerLaw(c, 1) with c > 0 is admissible
    (divergent on every dense-upper-density subset), and any summable
    family is not.  Everything else stays Unknown; membership in general
    quantifies over all dense subsets and is not decided here.
    """

    kind: HKind
    c: float = 0.0
    alpha: float = 0.0
    values: tuple[float, ...] = ()

    @staticmethod
    def power(c: float, alpha: float) -> "HFamily":
        if c < 0:
            raise ValueError("coefficient must be nonnegative")
        return HFamily(HKind.POWER_LAW, c=float(c), alpha=float(alpha))

    @staticmethod
    def constant(value: float) -> "HFamily":
        if value < 0:
            raise ValueError("constant must be nonnegative")
        return HFamily(HKind.CONSTANT, c=float(value))

    @staticmethod
    def custom(values) -> "HFamily":
        vals = tuple(float(v) for v in values)
        if any(v < 0 for v in vals):
            raise ValueError("values must be nonnegative")
        return HFamily(HKind.CUSTOM, values=vals)

    @staticmethod
    def parse(text: str) -> "HFamily":
        kind, _, rest = text.partition(":")
        if kind == "const":
            return HFamily.constant(float(rest))
        if kind == "power":
            parts = rest.split(",")
            if len(parts) != 2:
                raise ValueError("power form is power:c,alpha")
            return HFamily.power(float(parts[0]), float(parts[1]))
        raise ValueError(f"unknown h family {text!r}; use const:C or power:c,alpha")

    def __call__(self, n: int) -> float:
        if n < 1:
            raise ValueError("levels start at 1")
        if self.kind is HKind.POWER_LAW:
            return self.c * float(n) ** -self.alpha
        if self.kind is HKind.CONSTANT:
            return self.c
        if n > len(self.values):
            raise ValueError(f"custom family tabulated only up to {len(self.values)}")
        return self.values[n - 1]

    @property
    def summable(self) -> bool | None:
        """Whether the full series converges; None when not analytic."""
        if self.kind is HKind.POWER_LAW:
            return self.c == 0.0 or self.alpha > 1.0
        if self.kind is HKind.CONSTANT:
            return self.c == 0.0
        return None

    @property
    def membership(self) -> HMembership:
        if self.summable:
            return HMembership.NOT_IN_H
        if self.kind is HKind.POWER_LAW and self.alpha == 1.0 and self.c > 0:
            return HMembership.IN_H
        return HMembership.UNKNOWN

    def describe(self) -> str:
        if self.kind is HKind.POWER_LAW:
            return f"power:{self.c:g},{self.alpha:g}"
        if self.kind is HKind.CONSTANT:
            return f"const:{self.c:g}"
        return f"custom[{len(self.values)}]"


# -- stage sets -------------------------------------------------------------


class TargetMode(Enum):
    SHRINKING_BALL = "shrinking-ball"
    SHRINKING_GENERAL = "shrinking-general"
    RECURRENCE = "recurrence"
    RECURRENCE_GENERAL = "recurrence-general"


CenterSpec = SymbolicSequence | np.ndarray | Callable[[int], np.ndarray] | None
ShapeSpec = Shape | Callable[[int], Shape] | None


@dataclass(frozen=True)
class TargetSpec:
    """What to chase at level n: shrinking targets or recurrence neighbourhoods.

    In the ball modes the level-n base set is the Euclidean ball of radius
    (h(n) / lambda(A)^n)^(1/d); in the general modes the caller supplies the
    base set per level.  The center applies to the shrinking modes only.
    """

    mode: TargetMode
    h: HFamily | None = None
    base_shape: ShapeSpec = None
    center: CenterSpec = None

    def __post_init__(self) -> None:
        ball = self.mode in (TargetMode.SHRINKING_BALL, TargetMode.RECURRENCE)
        if ball and self.h is None:
            raise ValueError(f"{self.mode.value} mode needs an h family")
        if not ball and self.base_shape is None:
            raise ValueError(f"{self.mode.value} mode needs a base shape")

    @property
    def is_recurrence(self) -> bool:
        return self.mode in (TargetMode.RECURRENCE, TargetMode.RECURRENCE_GENERAL)

    def level_shape(self, ifs: AffineIFS, n: int) -> Shape:
        if self.mode in (TargetMode.SHRINKING_BALL, TargetMode.RECURRENCE):
            radius = (self.h(n) / ifs.lambda_value ** n) ** (1.0 / ifs.dimension)
            if radius <= 0:
                raise ValueError(f"h({n}) = 0 gives an empty target")
            return Ball(radius)
        shape = self.base_shape
        return shape(n) if callable(shape) else shape

    def center_point(self, ifs: AffineIFS, n: int,
                     truncation_depth: int = 64) -> np.ndarray:
        if self.is_recurrence:
            raise ValueError("recurrence sets have no target center")
        c = self.center
        if c is None:
            return np.zeros(ifs.dimension)
        if isinstance(c, SymbolicSequence):
            return project(ifs, c)
        if callable(c):
            return np.atleast_1d(np.asarray(c(n), dtype=float))
        return np.atleast_1d(np.asarray(c, dtype=float))


def shrinking_ball_spec(h: HFamily, center: CenterSpec = None) -> TargetSpec:
    return TargetSpec(TargetMode.SHRINKING_BALL, h=h, center=center)


def recurrence_ball_spec(h: HFamily) -> TargetSpec:
    return TargetSpec(TargetMode.RECURRENCE, h=h)


def _push_shape(shape: Shape, mat: np.ndarray, d: int) -> Shape:
    """The image of a symmetric convex shape under an invertible matrix."""
    if d == 1:
        scale = abs(float(mat[0, 0]))
        if isinstance(shape, Ball):
            return Ball(shape.radius * scale)
        if isinstance(shape, Box):
            return Ball(float(shape.halfwidths[0]) * scale)
        return Ball(shape.radius * abs(float(shape.matrix[0, 0])) * scale)
    if isinstance(shape, Ball):
        return LinearImageBall(mat, shape.radius)
    if isinstance(shape, LinearImageBall):
        return LinearImageBall(mat @ shape.matrix, shape.radius)
    offdiag = np.max(np.abs(mat - np.diag(np.diag(mat))))
    if offdiag > 1e-12:
        raise ValueError("box targets require diagonal word matrices")
    return Box(np.abs(np.diag(mat)) * shape.halfwidths)


def stage_target_bodies(ifs: AffineIFS, spec: TargetSpec, n: int,
                        budget: int | None = None) -> list[PlacedBody]:
    """One body per word w in I^n: S_w(x_n + E_n), centered at S_w(x_n)."""
    if spec.is_recurrence:
        raise ValueError("spec is a recurrence spec; use stage_recurrence_bodies")
    kwargs = {} if budget is None else {"budget": budget}
    mats, trans = word_affine_arrays(ifs, n, **kwargs)
    x = spec.center_point(ifs, n)
    centers = trans + mats @ x
    shape = spec.level_shape(ifs, n)
    d = ifs.dimension
    return [PlacedBody(centers[k], _push_shape(shape, mats[k], d))
            for k in range(centers.shape[0])]


def _lex_reversal_permutation(m: int, n: int) -> np.ndarray:
    """Index permutation sending each word's lex index to its reversal's."""
    idx = np.arange(m ** n, dtype=np.int64)
    out = np.zeros_like(idx)
    rest = idx.copy()
    for _ in range(n):
        out = out * m + rest % m
        rest //= m
    return out


def stage_recurrence_bodies(ifs: AffineIFS, spec: TargetSpec, n: int,
                            budget: int | None = None) -> list[PlacedBody]:
    """One body per word w: the set of x with T_w(x) in x + E_n.

    The body for w is centered at the fixed point of S_{reverse(w)} and its
    shape is the image of E_n under the resolvent sum_k A_{reverse(w)}^k.
    """
    if not spec.is_recurrence:
        raise ValueError("spec is a shrinking-target spec; use stage_target_bodies")
    kwargs = {} if budget is None else {"budget": budget}
    mats, trans = word_affine_arrays(ifs, n, **kwargs)
    d = ifs.dimension
    perm = _lex_reversal_permutation(ifs.alphabet_size, n)
    mats, trans = mats[perm], trans[perm]  # arrays of S_{reverse(w)}, w in lex order
    eye = np.eye(d)
    fixed = np.linalg.solve(eye - mats, trans[..., None])[..., 0]
    resolvents = np.linalg.inv(np.linalg.inv(mats) - eye)
    shape = spec.level_shape(ifs, n)
    return [PlacedBody(fixed[k], _push_shape(shape, resolvents[k], d))
            for k in range(fixed.shape[0])]


def stage_bodies(ifs: AffineIFS, spec: TargetSpec, n: int,
                 budget: int | None = None) -> list[PlacedBody]:
    if spec.is_recurrence:
        return stage_recurrence_bodies(ifs, spec, n, budget)
    return stage_target_bodies(ifs, spec, n, budget)


def stage_intervals(ifs: AffineIFS, spec: TargetSpec, n: int,
                    budget: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized d=1 stage set: (lo, hi) arrays, one interval per word.

    Avoids materializing body objects, which matters at 3^12 words.
    """
    if ifs.dimension != 1:
        raise ValueError("stage_intervals requires dimension 1")
    kwargs = {} if budget is None else {"budget": budget}
    mats, trans = word_affine_arrays(ifs, n, **kwargs)
    a = mats[:, 0, 0]
    t = trans[:, 0]
    shape = spec.level_shape(ifs, n)
    base_half = (shape.radius if isinstance(shape, (Ball, LinearImageBall))
                 else float(shape.halfwidths[0]))
    if isinstance(shape, LinearImageBall):
        base_half *= abs(float(shape.matrix[0, 0]))
    if spec.is_recurrence:
        # reorder so entry k belongs to the k-th lex word w (via reverse(w))
        perm = _lex_reversal_permutation(ifs.alphabet_size, n)
        a, t = a[perm], t[perm]
        centers = t / (1.0 - a)
        half = np.abs(a / (1.0 - a)) * base_half
    else:
        x = spec.center_point(ifs, n)[0]
        centers = a * x + t
        half = np.abs(a) * base_half
    return centers - half, centers + half


def stage_mask(ifs: AffineIFS, spec: TargetSpec, n: int, win: Window,
               resolution, budget: int | None = None) -> tuple[PixelMask, int]:
    """Rasterized level-n stage set plus its boundary-cell count."""
    if ifs.dimension == 1:
        los, his = stage_intervals(ifs, spec, n, budget)
        mask = rasterize_intervals(los, his, win, resolution)
        corners = _corner_flags_1d(los, his, win, mask.resolution[0])
        boundary = int(np.count_nonzero(corners[:-1] != corners[1:]))
        return mask, boundary
    bodies = stage_bodies(ifs, spec, n, budget)
    return rasterize_with_error(bodies, win, resolution)


# -- zero-measure diagnostics ----------------------------------------------


def exact_overlap_gamma(ifs: AffineIFS, w: Word) -> float:
    """Per-block measure decay factor when S_w coincides with another word map."""
    w = ifs.check_word(w)
    k = len(w)
    det = abs(np.linalg.det(compose_word(ifs, w).matrix))
    return 1.0 - det / ifs.lambda_value ** k


def detect_exact_overlaps(ifs: AffineIFS, max_len: int, tol: float = OVERLAP_TOL,
                          pair_budget: int = DEFAULT_PAIR_BUDGET
                          ) -> list[tuple[Word, Word]]:
    """Candidate pairs of equal-length words with coefficientwise equal maps.

    Floating-point closeness at `tol` is evidence, not proof; use
    overlap_is_exact for an exact recheck of a candidate pair.
    """
    m = ifs.alphabet_size
    found: list[tuple[Word, Word]] = []
    for length in range(1, max_len + 1):
        count = m ** length
        if count * count > pair_budget:
            raise BudgetError(
                f"{count}^2 ordered pairs at length {length} exceed the pair "
                f"budget {pair_budget}")
        mats, trans = word_affine_arrays(ifs, length)
        coeffs = np.concatenate(
            [mats.reshape(count, -1), trans.reshape(count, -1)], axis=1)
        block = max(1, 2 ** 20 // max(1, count))
        for i0 in range(0, count, block):
            lhs = coeffs[i0:i0 + block]
            gaps = np.abs(lhs[:, None, :] - coeffs[None, :, :]).max(axis=2)
            close = np.argwhere(gaps <= tol)
            for bi, j in close:
                i = i0 + int(bi)
                if i < j:
                    found.append((_decode_word(i, m, length),
                                  _decode_word(int(j), m, length)))
    return found


def _decode_word(index: int, m: int, length: int) -> Word:
    out = []
    for _ in range(length):
        out.append(index % m)
        index //= m
    return tuple(reversed(out))


def overlap_is_exact(ifs: AffineIFS, u: Word, v: Word) -> bool:
    """Exact-rational recheck of a candidate overlap pair.

    Every IEEE double is a rational number, so composing the word maps in
    Fraction arithmetic and comparing entries is an exact statement about
    the stored coefficients.
    """

    def exact_compose(word: Word) -> tuple[list[list[Fraction]], list[Fraction]]:
        d = ifs.dimension
        mat = [[Fraction(int(i == j)) for j in range(d)] for i in range(d)]
        vec = [Fraction(0)] * d
        for symbol in word:
            a = ifs.maps[symbol].matrix
            t = ifs.maps[symbol].translation
            new_mat = [[sum(Fraction(mat[i][k]) * Fraction(a[k, j])
                            for k in range(d)) for j in range(d)]
                       for i in range(d)]
            new_vec = [vec[i] + sum(Fraction(mat[i][k]) * Fraction(t[k])
                                    for k in range(d)) for i in range(d)]
            mat, vec = new_mat, new_vec
        return mat, vec

    mu, tu = exact_compose(u)
    mv, tv = exact_compose(v)
    return mu == mv and tu == tv


def product_ifs_criterion(factor_sizes: Sequence[int],
                          factor_ratios: Sequence[float]) -> float:
    """Narrow-rectangle criterion for a product of interval IFSs.

    Returns min_l(#I_l * lambda_l) / (prod_l #I_l * lambda_l)^(1/d); a value
    below 1 certifies the zero-measure regime where one factor's cylinders
    shrink faster than the geometric mean.
    """
    sizes = [int(s) for s in factor_sizes]
    ratios = [float(r) for r in factor_ratios]
    if len(sizes) != len(ratios) or len(sizes) < 2:
        raise ValueError("need matching factor lists of length d >= 2")
    if any(s < 1 for s in sizes):
        raise ValueError("factor sizes must be positive")
    if any(not 0.0 < r < 1.0 for r in ratios):
        raise ValueError("factor ratios must lie in (0,1)")
    products = [s * r for s, r in zip(sizes, ratios)]
    geo_mean = float(np.prod(products)) ** (1.0 / len(products))
    return min(products) / geo_mean


class SeriesHint(Enum):
    CONVERGES = "ConvergesAnalytically"
    DIVERGES = "DivergesAnalytically"
    NUMERIC = "Numeric"


@dataclass
class BorelCantelliReport:
    levels: list[int]
    level_bounds: list[float]
    partial_sums: list[float]
    hint: SeriesHint
    gamma: float | None = None
    overlap_block: int | None = None
    gamma_terms: list[float] | None = None
    gamma_partial_sums: list[float] | None = None
    gamma_tail_bound: float | None = None

    def to_dict(self) -> dict:
        out = {
            "levels": self.levels,
            "level_bounds": self.level_bounds,
            "partial_sums": self.partial_sums,
            "hint": self.hint.value,
        }
        if self.gamma is not None:
            out["gamma"] = self.gamma
            out["overlap_block"] = self.overlap_block
            out["gamma_terms"] = self.gamma_terms
            out["gamma_partial_sums"] = self.gamma_partial_sums
            out["gamma_tail_bound"] = self.gamma_tail_bound
        return out


def borel_cantelli_report(ifs: AffineIFS, spec: TargetSpec, levels: int,
                          overlap_word: Word | None = None,
                          budget: int | None = None) -> BorelCantelliReport:
    """Analytic per-level measure bounds and their partial sums.

    In ball modes the level-n hit set has measure at most h(n) * vol(B(0,1))
    for shrinking targets, and at most the resolvent-determinant sum times
    vol(E_n) for recurrence sets.  When an exact-overlap word is supplied,
    the geometric gamma^floor(n/k) bound is reported alongside.  Convergence
    verdicts are emitted only for closed-form h families; numeric partial
    sums never certify convergence.
    """
    vd = unit_ball_volume(ifs.dimension)
    shared = equal_diagonal_matrix(ifs)
    bounds = []
    for n in range(1, levels + 1):
        shape = spec.level_shape(ifs, n)
        vol_e = PlacedBody(np.zeros(ifs.dimension), shape).volume()
        if spec.is_recurrence:
            if shared is not None:
                res = resolvent_of_matrix(np.linalg.matrix_power(shared, n))
                det_sum = ifs.alphabet_size ** n * abs(np.linalg.det(res))
            else:
                kwargs = {} if budget is None else {"budget": budget}
                mats, _ = word_affine_arrays(ifs, n, **kwargs)
                eye = np.eye(ifs.dimension)
                res = np.linalg.inv(np.linalg.inv(mats) - eye)
                det_sum = float(np.abs(np.linalg.det(res)).sum())
            bounds.append(det_sum * vol_e)
        else:
            bounds.append(ifs.lambda_value ** n * vol_e)

    partials = list(np.cumsum(bounds))

    if spec.h is not None and spec.h.summable is not None:
        hint = SeriesHint.CONVERGES if spec.h.summable else SeriesHint.DIVERGES
    else:
        hint = SeriesHint.NUMERIC

    report = BorelCantelliReport(
        levels=list(range(1, levels + 1)),
        level_bounds=[float(b) for b in bounds],
        partial_sums=[float(p) for p in partials],
        hint=hint,
    )
    if overlap_word is not None:
        k = len(overlap_word)
        gamma = exact_overlap_gamma(ifs, overlap_word)
        terms = [gamma ** (n // k) for n in range(1, levels + 1)]
        report.gamma = gamma
        report.overlap_block = k
        report.gamma_terms = terms
        report.gamma_partial_sums = list(np.cumsum(terms))
        # sum_{n > N} gamma^{floor(n/k)} <= k * gamma^{floor(N/k)} / (1-gamma)
        report.gamma_tail_bound = k * gamma ** (levels // k) / (1.0 - gamma)
    return report


def restricted_coverage(ifs: AffineIFS, spec: TargetSpec, n: int,
                        ball: PlacedBody, win: Window, resolution,
                        budget: int | None = None) -> float:
    """Fraction of the ball's cells covered by the level-n stage set."""
    mask, _ = stage_mask(ifs, spec, n, win, resolution, budget)
    res = mask.resolution
    d = win.dimension
    axes = [win.lo[k] + (np.arange(res[k]) + 0.5) * win.widths[k] / res[k]
            for k in range(d)]
    if d == 1:
        pts = axes[0][:, None]
    else:
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    in_ball = ball.contains(pts).reshape(res)
    total = int(np.count_nonzero(in_ball))
    if total == 0:
        raise ValueError("ball contains no cell centers; refine the grid")
    covered = int(np.count_nonzero(in_ball & mask.bits))
    return covered / total


def upper_density_estimate(indicator: Sequence[bool]) -> float:
    """Finite limsup proxy: max prefix ratio over the second half of the run."""
    flags = np.asarray(indicator, dtype=bool)
    n = flags.size
    if n < 1:
        raise ValueError("need at least one term")
    prefix = np.cumsum(flags)
    start = (n + 1) // 2
    ns = np.arange(start, n + 1)
    return float(np.max(prefix[ns - 1] / ns))


# -- exports ----------------------------------------------------------------


def mask_to_pgm(mask: PixelMask) -> bytes:
    """Binary PGM (P5, maxval 255): 0 = empty, 255 = occupied; d=2 only.

    The image is width = x resolution, height = y resolution, with the top
    row at the window's maximal y.
    """
    if mask.dimension != 2:
        raise ValueError("PGM export is for d=2 masks")
    rx, ry = mask.resolution
    img = np.flipud(mask.bits.T).astype(np.uint8) * 255
    header = f"P5\n{rx} {ry}\n255\n".encode()
    return header + img.tobytes()


def mask_to_runs(mask: PixelMask) -> list[tuple[int, int]]:
    """(start_cell, run_length) pairs of occupied runs; d=1 only."""
    if mask.dimension != 1:
        raise ValueError("run-length export is for d=1 masks")
    bits = mask.bits
    if not bits.any():
        return []
    padded = np.concatenate(([False], bits, [False]))
    changes = np.flatnonzero(padded[1:] != padded[:-1])
    starts, ends = changes[::2], changes[1::2]
    return [(int(s), int(e - s)) for s, e in zip(starts, ends)]
