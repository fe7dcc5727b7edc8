"""Monte Carlo over translation space for the transversality-scaling checks.

The translation vectors of an IFS with fixed matrices are drawn uniformly
from [-R, R]^(m*d) with a counter-based generator (Philox keyed by
(seed, sample index)), so any sample can be regenerated independently of
how many were requested and the sample loop parallelizes without shared
state.  For each sample the pair-overlap statistic counts word pairs whose
translated ellipses intersect; its mean over samples should scale like
s^d, and the fitted log-log slope is the empirical check.  The union
statistics rasterize the stage unions and assert the per-sample hard
bounds at runtime: a violation beyond the rasterization error is a bug,
not data.

Only sample means and standard errors are ever reported; the integral over
translation space itself is never claimed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BudgetError, ConsistencyError
from .ifs_core import (
    AffineIFS,
    SymbolicSequence,
    affine_map,
    operator_norm,
    project,
    word_affine_arrays,
)
from .measure_lab import (
    Ball,
    PlacedBody,
    _push_shape,
    rasterize_intervals,
    _corner_flags_1d,
    rasterize_with_error,
    unit_ball_volume,
    window,
)

DEFAULT_S_GRID = (0.05, 0.075, 0.1, 0.15, 0.2, 0.3, 0.4)
MAX_LEVEL = 8
MAX_SAMPLES = 500
_PAIR_BLOCK = 512


@dataclass(frozen=True)
class ParameterSample:
    """One draw of the translation vectors, reproducible from (seed, index)."""

    translations: np.ndarray  # (m, d)
    seed: int
    index: int


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    key = np.array([seed % 2 ** 64, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_translations(m: int, d: int, box_radius: float, count: int,
                        seed: int, max_samples: int = MAX_SAMPLES
                        ) -> list[ParameterSample]:
    """Uniform draws from [-R, R]^(m*d), one Philox stream per sample.

    Coordinates are drawn in (map index, axis) order from the stream keyed
    by (seed, sample index), so sample k is identical no matter the count.
    """
    if count < 1:
        raise ValueError("need at least one sample")
    if count > max_samples:
        raise BudgetError(f"{count} samples exceed the sample budget {max_samples}")
    if box_radius < 0:
        raise ValueError("box radius must be nonnegative")
    out = []
    for index in range(count):
        u = _sample_rng(seed, index).random((m, d))
        out.append(ParameterSample(box_radius * (2.0 * u - 1.0), seed, index))
    return out


def ifs_at_sample(matrices: Sequence[np.ndarray], sample: ParameterSample,
                  strict: bool = False) -> AffineIFS:
    return AffineIFS([affine_map(a, t) for a, t in
                      zip(matrices, sample.translations)], strict=strict)


def _require_equal_positive_diagonal(matrices: Sequence[np.ndarray]) -> np.ndarray:
    mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in matrices]
    first = mats[0]
    for a in mats[1:]:
        if a.shape != first.shape or np.max(np.abs(a - first)) > 1e-12:
            raise ValueError(
                "unsupported configuration: all matrices must be equal")
    if np.max(np.abs(first - np.diag(np.diag(first)))) > 1e-12 or \
            np.any(np.diag(first) <= 0):
        raise ValueError(
            "unsupported configuration: the shared matrix must be positive diagonal")
    if operator_norm(first) >= 0.5:
        raise ValueError("the shared matrix must have operator norm < 1/2")
    return first


def _check_level(m: int, n: int, max_level: int) -> None:
    if n < 1:
        raise ValueError("level must be at least 1")
    if n > max_level:
        raise BudgetError(
            f"level {n} exceeds the pair-statistic level budget {max_level} "
            f"({m}^{n} words, O(m^2n) pair tests)")


def _scaled_centers(matrices, sample: ParameterSample, tail: SymbolicSequence,
                    n: int, mode: str) -> tuple[np.ndarray, float]:
    """Centers pulled back through A^{-n}, plus lambda(A) of the sampled IFS."""
    a = _require_equal_positive_diagonal(matrices)
    ifs = ifs_at_sample(matrices, sample)
    _, trans = word_affine_arrays(ifs, n)
    d = a.shape[0]
    diag_n = np.diag(a).astype(float) ** n
    if mode == "target":
        base = project(ifs, tail)
        centers = trans + base * diag_n  # A^n x + t_w for diagonal A
    elif mode == "recurrence":
        centers = trans / (1.0 - diag_n)  # fixed points (I - A^n)^{-1} t_w
    else:
        raise ValueError(f"unknown center mode {mode!r}")
    return centers / diag_n, ifs.lambda_value


def _count_pairs_within(y: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Unordered pairs with ||y_j - y_k|| <= each threshold; blockwise."""
    counts = np.zeros(thresholds.size, dtype=np.int64)
    k = y.shape[0]
    sq = thresholds ** 2
    for i0 in range(0, k - 1, _PAIR_BLOCK):
        i1 = min(i0 + _PAIR_BLOCK, k - 1)
        for i in range(i0, i1):
            delta = y[i + 1:] - y[i]
            dist2 = np.einsum("kd,kd->k", delta, delta)
            counts += np.count_nonzero(dist2[None, :] <= sq[:, None], axis=1)
    return counts


def pair_overlap_statistic(matrices, sample: ParameterSample,
                           tail: SymbolicSequence, n: int, s: float,
                           mode: str = "target",
                           max_level: int = MAX_LEVEL) -> int:
    """Unordered word pairs whose translated level-n ellipses intersect.

    The ellipse is A^n B(0, s / lambda(A)^(n/d)); translates at x and x'
    intersect iff x - x' lies in the doubled ellipse, i.e. the pulled-back
    distance ||A^-n (x - x')|| is at most 2 s / lambda(A)^(n/d).
    """
    if s <= 0:
        raise ValueError("s must be positive")
    _check_level(len(matrices), n, max_level)
    y, lam = _scaled_centers(matrices, sample, tail, n, mode)
    d = y.shape[1]
    threshold = 2.0 * s / lam ** (n / d)
    return int(_count_pairs_within(y, np.array([threshold]))[0])


@dataclass
class ScalingReport:
    """Per-s sample means of the pair statistic and the fitted log-log slope."""

    s_grid: list[float]
    means: list[float]
    stderrs: list[float]
    ratios: list[float]          # mean / m^n
    excluded: list[bool]         # grid points with all-zero counts, left out of the fit
    slope: float
    intercept: float
    n: int
    m: int
    d: int
    box_radius: float
    seed: int
    samples: int
    mode: str = "target"
    counts: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "grid": self.s_grid,
            "means": self.means,
            "stderrs": self.stderrs,
            "ratios": self.ratios,
            "excluded": self.excluded,
            "slope": self.slope,
            "intercept": self.intercept,
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "R": self.box_radius,
            "seed": self.seed,
            "samples": self.samples,
            "mode": self.mode,
        }


def mc_scaling(matrices, tail: SymbolicSequence, n: int, box_radius: float,
               s_grid: Sequence[float] = DEFAULT_S_GRID, samples: int = 200,
               seed: int = 0, mode: str = "target", threads: int = 0,
               max_level: int = MAX_LEVEL,
               max_samples: int = MAX_SAMPLES) -> ScalingReport:
    """Sample means of the pair statistic over an s grid, with a slope fit.

    The expected exponent is the ambient dimension d.  Grid points whose
    mean is zero carry no log information and are excluded from the fit
    (and flagged).  Results are bitwise reproducible for a fixed
    (seed, config): samples accumulate into preallocated slots by index,
    so thread count does not affect the outcome.
    """
    grid = [float(s) for s in s_grid]
    if sorted(grid) != grid or len(set(grid)) != len(grid):
        raise ValueError("s grid must be strictly increasing")
    a = _require_equal_positive_diagonal(matrices)
    d = a.shape[0]
    m = len(matrices)
    _check_level(m, n, max_level)
    draws = sample_translations(m, d, box_radius, samples, seed,
                                max_samples=max_samples)
    counts = np.zeros((len(grid), samples), dtype=np.int64)

    def run_sample(k: int) -> None:
        y, lam = _scaled_centers(matrices, draws[k], tail, n, mode)
        thresholds = 2.0 * np.array(grid) / lam ** (n / d)
        counts[:, k] = _count_pairs_within(y, thresholds)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_sample, range(samples)))
    else:
        for k in range(samples):
            run_sample(k)

    means = counts.mean(axis=1)
    stderrs = counts.std(axis=1, ddof=1) / np.sqrt(samples) if samples > 1 \
        else np.zeros(len(grid))
    excluded = means == 0.0
    included = ~excluded
    if included.sum() < 2:
        raise ValueError(
            "fewer than two grid points have nonzero means; nothing to fit")
    slope, intercept = np.polyfit(np.log(np.array(grid)[included]),
                                  np.log(means[included]), 1)
    return ScalingReport(
        s_grid=grid,
        means=[float(v) for v in means],
        stderrs=[float(v) for v in stderrs],
        ratios=[float(v / m ** n) for v in means],
        excluded=[bool(v) for v in excluded],
        slope=float(slope),
        intercept=float(intercept),
        n=n, m=m, d=d, box_radius=float(box_radius), seed=seed,
        samples=samples, mode=mode, counts=counts,
    )


# -- union measure statistics ------------------------------------------------


@dataclass(frozen=True)
class UnionStat:
    """Rasterized union measure with its audit fields."""

    value: float
    hard_bound: float
    boundary_error: float
    s: float
    n: int


def _exponential_ball_radius(lam: float, n: int, d: int) -> float:
    # the ball E_n with Lebesgue measure lambda(A)^{-n}
    return (lam ** -n / unit_ball_volume(d)) ** (1.0 / d)


def _union_measure(bodies_lo_hi_or_list, d: int, resolution) -> tuple[float, float, float]:
    """Rasterize a union over its padded bounding box; returns (measure, err, cellvol)."""
    if d == 1:
        los, his = bodies_lo_hi_or_list
        lo, hi = float(np.min(los)), float(np.max(his))
        pad = max((hi - lo) * 1e-3, 1e-9)
        win = window([lo - pad], [hi + pad])
        mask = rasterize_intervals(los, his, win, resolution)
        corners = _corner_flags_1d(los, his, win, mask.resolution[0])
        boundary = int(np.count_nonzero(corners[:-1] != corners[1:]))
        return mask.measure(), boundary * mask.cell_volume, mask.cell_volume
    bodies = bodies_lo_hi_or_list
    lows = np.min([b.center - b.bounding_halfwidths() for b in bodies], axis=0)
    highs = np.max([b.center + b.bounding_halfwidths() for b in bodies], axis=0)
    pad = np.maximum((highs - lows) * 1e-3, 1e-9)
    win = window(lows - pad, highs + pad)
    mask, boundary = rasterize_with_error(bodies, win, resolution)
    return mask.measure(), boundary * mask.cell_volume, mask.cell_volume


def union_measure_statistic(matrices, sample: ParameterSample,
                            tail: SymbolicSequence, n: int, s: float,
                            resolution: int = 4096,
                            max_level: int = MAX_LEVEL) -> UnionStat:
    """Measure of the union of word images of the scaled exponential target.

    The target is pi_T(tail) + s E_n with E_n the ball of volume
    lambda(A)^{-n}; summing |det A_w| over words makes s^d an exact upper
    bound for the union measure, which is asserted per sample (within the
    rasterization error) as a bug trap.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    _check_level(len(matrices), n, max_level)
    ifs = ifs_at_sample(matrices, sample)
    d = ifs.dimension
    radius = s * _exponential_ball_radius(ifs.lambda_value, n, d)
    mats, trans = word_affine_arrays(ifs, n)
    base = project(ifs, tail)
    centers = trans + mats @ base
    if d == 1:
        half = np.abs(mats[:, 0, 0]) * radius
        measure, err, _ = _union_measure(
            (centers[:, 0] - half, centers[:, 0] + half), 1, resolution)
    else:
        bodies = [PlacedBody(centers[k], _push_shape(Ball(radius), mats[k], d))
                  for k in range(centers.shape[0])]
        measure, err, _ = _union_measure(bodies, d, resolution)
    bound = s ** d
    if measure > bound + err + 1e-12:
        raise ConsistencyError(
            f"union measure {measure} exceeds the hard bound {bound} "
            f"beyond the boundary error {err} (sample {sample.index})")
    return UnionStat(value=measure, hard_bound=bound, boundary_error=err,
                     s=s, n=n)


def recurrence_union_statistic(matrices, sample: ParameterSample, n: int,
                               s: float, resolution: int = 4096,
                               max_level: int = MAX_LEVEL) -> UnionStat:
    """Measure of the union of recurrence neighbourhoods at level n.

    Bodies are pi_T(w^inf) + resolvent(A_w)(s E_n); the determinant sum of
    the resolvents over words, times the volume of s E_n, is the hard
    per-sample bound.  Requires strict contractions (norm < 1/2), which
    keeps the resolvent determinants comparable to |det A_w|.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    _check_level(len(matrices), n, max_level)
    ifs = ifs_at_sample(matrices, sample, strict=True)
    d = ifs.dimension
    radius = s * _exponential_ball_radius(ifs.lambda_value, n, d)
    mats, trans = word_affine_arrays(ifs, n)
    eye = np.eye(d)
    fixed = np.linalg.solve(eye - mats, trans[..., None])[..., 0]
    resolvents = np.linalg.inv(np.linalg.inv(mats) - eye)
    det_sum = float(np.abs(np.linalg.det(resolvents)).sum())
    if d == 1:
        half = np.abs(resolvents[:, 0, 0]) * radius
        measure, err, _ = _union_measure(
            (fixed[:, 0] - half, fixed[:, 0] + half), 1, resolution)
    else:
        bodies = [PlacedBody(fixed[k], _push_shape(Ball(radius), resolvents[k], d))
                  for k in range(fixed.shape[0])]
        measure, err, _ = _union_measure(bodies, d, resolution)
    bound = s ** d * det_sum / ifs.lambda_value ** n
    if measure > bound + err + 1e-12:
        raise ConsistencyError(
            f"recurrence union measure {measure} exceeds the hard bound {bound} "
            f"beyond the boundary error {err} (sample {sample.index})")
    return UnionStat(value=measure, hard_bound=bound, boundary_error=err,
                     s=s, n=n)
