import itertools

import numpy as np
import pytest

from ifs_recur.covering_sep import (
    count_overlap_pairs,
    dilate_covers,
    exact_max_separated,
    greedy_disjoint_cover,
    max_separated_subset,
    rectangle_family,
    translates_intersect,
)
from ifs_recur.measure_lab import (
    Ball,
    Box,
    LinearImageBall,
    placed_box,
    rasterize,
    union_of_masks,
    window,
)


def random_family(rng, d, n):
    # nonincreasing halfwidths per axis, random centers
    halfwidths = np.sort(rng.uniform(0.02, 0.5, size=(n, d)), axis=0)[::-1]
    centers = rng.uniform(-2, 2, size=(n, d))
    return rectangle_family(centers, halfwidths)


class TestFamilyValidation:
    def test_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="nonincreasing"):
            rectangle_family([[0.0], [1.0]], [[0.1], [0.2]])

    def test_positive_halfwidths(self):
        with pytest.raises(ValueError):
            rectangle_family([[0.0]], [[0.0]])


class TestGreedyCover:
    def test_pairwise_disjoint_all_selected(self):
        fam = rectangle_family([[0.0], [1.0], [2.0]],
                               [[0.3], [0.3], [0.3]])
        assert greedy_disjoint_cover(fam) == [0, 1, 2]

    def test_identical_rectangles(self):
        fam = rectangle_family([[0.5]] * 4, [[0.2]] * 4)
        selected = greedy_disjoint_cover(fam)
        assert selected == [0]
        assert dilate_covers(fam, selected)

    def test_nested_chain(self):
        half = [[0.8], [0.4], [0.2], [0.1]]
        fam = rectangle_family([[0.0]] * 4, half)
        assert greedy_disjoint_cover(fam) == [0]

    def test_selection_is_first_fit(self):
        # rectangle 1 touches 0, rectangle 2 misses both
        fam = rectangle_family([[0.0], [0.5], [2.0]],
                               [[0.3], [0.3], [0.3]])
        assert greedy_disjoint_cover(fam) == [0, 2]

    @pytest.mark.parametrize("d", [1, 2])
    def test_random_families_disjoint_and_cover(self, d):
        rng = np.random.default_rng(100 + d)
        for _ in range(25):
            fam = random_family(rng, d, int(rng.integers(2, 14)))
            selected = greedy_disjoint_cover(fam)
            # exact pairwise disjointness via interval arithmetic per axis
            for a, b in itertools.combinations(selected, 2):
                gap = np.abs(fam.centers[a] - fam.centers[b])
                assert np.any(gap > fam.halfwidths[a] + fam.halfwidths[b])
            assert dilate_covers(fam, selected)

    def test_raster_coverage_2d(self):
        rng = np.random.default_rng(5)
        fam = random_family(rng, 2, 10)
        selected = greedy_disjoint_cover(fam)
        win = window([-3.0, -3.0], [3.0, 3.0])
        inputs = rasterize([placed_box(c, h) for c, h in
                            zip(fam.centers, fam.halfwidths)], win, 1024)
        dilates = rasterize([placed_box(fam.centers[j], 3 * fam.halfwidths[j])
                             for j in selected], win, 1024)
        uncovered = inputs.bits & ~dilates.bits
        assert not uncovered.any()


UNIT_INTERVAL = Box(np.array([1.0]))


class TestSeparation:
    def test_far_points_all_selected(self):
        pts = np.array([0.0, 10.0, 20.0])
        assert max_separated_subset(pts, UNIT_INTERVAL, 0.5) == [0, 1, 2]

    def test_identical_points_one_selected(self):
        pts = np.zeros(5)
        assert max_separated_subset(pts, UNIT_INTERVAL, 0.3) == [0]

    def test_first_fit_example(self):
        # halfwidth 0.3 intervals: 0 vs 0.5 overlap, 0 vs 1 do not
        pts = np.array([0.0, 0.5, 1.0])
        assert max_separated_subset(pts, UNIT_INTERVAL, 0.3) == [0, 2]

    def test_separated_set_has_zero_overlap_pairs(self):
        rng = np.random.default_rng(31)
        for shape in (Ball(0.7), Box(np.array([0.5, 1.0])),
                      LinearImageBall(np.array([[0.8, 0.1], [0.0, 0.5]]), 1.0)):
            pts = rng.uniform(-3, 3, size=(40, 2))
            s = 0.25
            chosen = max_separated_subset(pts, shape, s)
            assert count_overlap_pairs(pts[chosen], shape, s) == 0

    def test_greedy_maximality_every_excluded_conflicts(self):
        rng = np.random.default_rng(32)
        pts = rng.uniform(0, 4, size=(30, 1))
        s = 0.4
        chosen = max_separated_subset(pts, UNIT_INTERVAL, s)
        chosen_set = set(chosen)
        for i in range(len(pts)):
            if i in chosen_set:
                continue
            assert any(translates_intersect(pts[i], pts[j], UNIT_INTERVAL, s)
                       for j in chosen)


class TestOverlapPairs:
    def test_far_points(self):
        assert count_overlap_pairs(np.array([0.0, 5.0]), UNIT_INTERVAL, 0.3) == 0

    def test_identical_points(self):
        k = 6
        assert count_overlap_pairs(np.zeros(k), UNIT_INTERVAL, 0.1) == k * (k - 1)

    def test_three_point_example(self):
        # |0 - 0.5| = 0.5 <= 0.6 and |0.5 - 1| = 0.5 <= 0.6, |0 - 1| = 1 > 0.6
        # brute-force membership check of the 2sE criterion gives 4 ordered pairs
        pts = np.array([0.0, 0.5, 1.0])
        count = 0
        for i in range(3):
            for j in range(3):
                if i != j and abs(pts[i] - pts[j]) <= 2 * 0.3 * 1.0:
                    count += 1
        assert count == 4
        assert count_overlap_pairs(pts, UNIT_INTERVAL, 0.3) == 4

    def test_count_is_even(self):
        rng = np.random.default_rng(41)
        for _ in range(10):
            pts = rng.uniform(-1, 1, size=(25, 2))
            assert count_overlap_pairs(pts, Ball(0.3), 0.5) % 2 == 0

    def test_boundary_contact_counts(self):
        pts = np.array([0.0, 0.6])
        # 2sE halfwidth exactly 0.6: closed bodies touch
        assert count_overlap_pairs(pts, UNIT_INTERVAL, 0.3) == 2


class TestExactMaximum:
    def test_matches_brute_force_subsets(self):
        rng = np.random.default_rng(55)
        for _ in range(8):
            n = int(rng.integers(4, 12))
            pts = rng.uniform(0, 3, size=(n, 1))
            s = float(rng.uniform(0.1, 0.5))
            exact = exact_max_separated(pts, UNIT_INTERVAL, s)
            best = 0
            for mask in range(1 << n):
                subset = [i for i in range(n) if mask >> i & 1]
                ok = all(not translates_intersect(pts[i], pts[j],
                                                  UNIT_INTERVAL, s)
                         for a, i in enumerate(subset)
                         for j in subset[a + 1:])
                if ok:
                    best = max(best, len(subset))
            assert exact == best

    def test_greedy_lower_bounds_exact(self):
        rng = np.random.default_rng(56)
        for _ in range(10):
            pts = rng.uniform(0, 2, size=(14, 2))
            s = 0.2
            greedy = len(max_separated_subset(pts, Ball(0.5), s))
            exact = exact_max_separated(pts, Ball(0.5), s)
            assert greedy <= exact

    def test_size_limit(self):
        with pytest.raises(ValueError):
            exact_max_separated(np.zeros((21, 1)), UNIT_INTERVAL, 0.1)
