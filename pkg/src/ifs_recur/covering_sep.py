"""Greedy 3-dilate covering for shrinking rectangles and separation statistics.

The covering procedure follows the classical 3r argument specialized to
axis-aligned rectangles whose side lengths shrink monotonically with the
index: repeatedly select the smallest index whose rectangle is disjoint
from everything already selected.  Monotonicity guarantees that every
rejected rectangle fits inside the 3-dilate of the selected rectangle it
touches.

Separation statistics work with translates of a scaled symmetric convex
body: two translates x + sE and x' + sE intersect exactly when
x - x' lies in 2sE, so all tests reduce to one membership query on the
difference vector.  Boundary contact counts as intersection (closed
bodies).  Input order is the tie-breaker everywhere, which makes both
greedy procedures deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .measure_lab import Ball, Box, LinearImageBall, PlacedBody, Shape

_TOL = 1e-12


@dataclass(frozen=True)
class ShrinkingRectangleFamily:
    """Ordered rectangles (center, halfwidths) with per-axis nonincreasing sides."""

    centers: np.ndarray     # (n, d)
    halfwidths: np.ndarray  # (n, d)

    def __post_init__(self) -> None:
        if self.centers.ndim != 2 or self.centers.shape != self.halfwidths.shape:
            raise ValueError("centers and halfwidths must be (n, d) arrays")
        if np.any(self.halfwidths <= 0):
            raise ValueError("halfwidths must be positive")
        deltas = np.diff(self.halfwidths, axis=0)
        if np.any(deltas > _TOL):
            axis = int(np.argwhere(deltas > _TOL)[0][1])
            raise ValueError(
                f"halfwidth sequence must be nonincreasing on every axis "
                f"(violated on axis {axis})")

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def dimension(self) -> int:
        return self.centers.shape[1]


def rectangle_family(centers, halfwidths) -> ShrinkingRectangleFamily:
    return ShrinkingRectangleFamily(
        np.atleast_2d(np.asarray(centers, dtype=float)),
        np.atleast_2d(np.asarray(halfwidths, dtype=float)))


def _boxes_disjoint(c1, h1, c2, h2) -> bool:
    # closed boxes are disjoint iff they are strictly separated on some axis
    return bool(np.any(np.abs(c1 - c2) > h1 + h2))


def greedy_disjoint_cover(family: ShrinkingRectangleFamily) -> list[int]:
    """Indices M with pairwise disjoint rectangles whose 3-dilates cover all.

    Selection order is the induction itself: starting from the first index,
    repeatedly add the smallest index whose rectangle misses every selected
    one.  Returned indices are 0-based and increasing.
    """
    if len(family) == 0:
        return []
    selected: list[int] = []
    for i in range(len(family)):
        ci, hi = family.centers[i], family.halfwidths[i]
        if all(_boxes_disjoint(ci, hi, family.centers[j], family.halfwidths[j])
               for j in selected):
            selected.append(i)
    return selected


def dilate_covers(family: ShrinkingRectangleFamily, selected: Sequence[int],
                  factor: float = 3.0) -> bool:
    """Check analytically that every rectangle sits inside a selected dilate."""
    for i in range(len(family)):
        ci, hi = family.centers[i], family.halfwidths[i]
        inside = False
        for j in selected:
            cj, hj = family.centers[j], family.halfwidths[j]
            if np.all(np.abs(ci - cj) + hi <= factor * hj + _TOL):
                inside = True
                break
        if not inside:
            return False
    return True


# -- (s, E)-separation ------------------------------------------------------


def _difference_in_dilate(delta: np.ndarray, shape: Shape, s: float) -> np.ndarray:
    """Rows of delta lying in 2s * E, for a symmetric convex E."""
    if isinstance(shape, Ball):
        return np.einsum("kd,kd->k", delta, delta) <= (2 * s * shape.radius) ** 2
    if isinstance(shape, Box):
        return np.all(np.abs(delta) <= 2 * s * shape.halfwidths, axis=1)
    if isinstance(shape, LinearImageBall):
        pulled = delta @ np.linalg.inv(shape.matrix).T
        return np.einsum("kd,kd->k", pulled, pulled) <= \
            (2 * s * shape.radius) ** 2
    raise ValueError(f"unsupported shape {type(shape).__name__}; "
                     "separation tests need a symmetric convex body")


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts


def _shape_of(template: PlacedBody | Shape) -> Shape:
    return template.shape if isinstance(template, PlacedBody) else template


def translates_intersect(x: np.ndarray, y: np.ndarray,
                         template: PlacedBody | Shape, s: float) -> bool:
    """Whether x + sE and y + sE intersect (closed), via x - y in 2sE."""
    delta = np.atleast_1d(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return bool(_difference_in_dilate(delta[None, :], _shape_of(template), s)[0])


def max_separated_subset(points, template: PlacedBody | Shape,
                         s: float) -> list[int]:
    """Greedy maximal (s,E)-separated subset, first-fit in input order.

    Maximality: every excluded point conflicts with a selected one.  This is
    a lower bound for the maximum separated subset; see exact_max_separated
    for the exhaustive version on small inputs.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    pts = _as_points(points)
    shape = _shape_of(template)
    selected: list[int] = []
    for i in range(pts.shape[0]):
        if not selected:
            selected.append(i)
            continue
        deltas = pts[i] - pts[selected]
        if not _difference_in_dilate(deltas, shape, s).any():
            selected.append(i)
    return selected


def count_overlap_pairs(points, template: PlacedBody | Shape, s: float) -> int:
    """Ordered pairs (l, l'), l != l', whose s-scaled translates intersect."""
    if s <= 0:
        raise ValueError("s must be positive")
    pts = _as_points(points)
    shape = _shape_of(template)
    n = pts.shape[0]
    count = 0
    for i in range(n - 1):
        deltas = pts[i + 1:] - pts[i]
        count += int(np.count_nonzero(_difference_in_dilate(deltas, shape, s)))
    return 2 * count


def conflict_sets(points, template: PlacedBody | Shape, s: float) -> list[int]:
    """Bitmask of conflicting indices per point (self excluded)."""
    pts = _as_points(points)
    shape = _shape_of(template)
    n = pts.shape[0]
    masks = [0] * n
    for i in range(n):
        hits = _difference_in_dilate(pts - pts[i], shape, s)
        for j in np.flatnonzero(hits):
            if j != i:
                masks[i] |= 1 << int(j)
    return masks


def exact_max_separated(points, template: PlacedBody | Shape, s: float,
                        limit: int = 20) -> int:
    """Exact maximum (s,E)-separated subset size, by maximum independent set.

    Exhaustive branch over the conflict graph; feasible up to `limit` points.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    if n > limit:
        raise ValueError(f"exact search supports at most {limit} points, got {n}")
    conflicts = conflict_sets(pts, template, s)
    cache: dict[int, int] = {}

    def best(mask: int) -> int:
        if mask == 0:
            return 0
        if mask in cache:
            return cache[mask]
        v = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << v)
        skip = best(rest)
        take = 1 + best(rest & ~conflicts[v])
        cache[mask] = max(skip, take)
        return cache[mask]

    return best((1 << n) - 1)
