import itertools
import math

import numpy as np
import pytest

from ifs_recur.dimension_calc import (
    DichotomyInput,
    DichotomyVerdict,
    DimensionInput,
    axis_exponents,
    dim_lower_bound,
    garsia_hausdorff_criterion,
    isotropic_closed_form,
    one_dim_closed_form,
)
from ifs_recur.measure_lab import HFamily


def random_admissible(rng, d):
    lambdas = tuple(rng.uniform(0.05, 0.49, size=d))
    lambda_a = float(rng.uniform(1.01, 3.0))
    s = float(rng.uniform(1.001, 4.0))
    return DimensionInput(lambdas, lambda_a, s)


class TestValidation:
    def test_lambda_range(self):
        with pytest.raises(ValueError):
            DimensionInput((0.5,), 1.2, 2.0)
        with pytest.raises(ValueError):
            DimensionInput((0.0,), 1.2, 2.0)

    def test_lambda_a_range(self):
        with pytest.raises(ValueError):
            DimensionInput((0.4,), 1.0, 2.0)

    def test_s_must_exceed_one(self):
        with pytest.raises(ValueError):
            DimensionInput((0.4,), 1.2, 1.0)


class TestDimLowerBound:
    def test_isotropic_closed_form(self):
        rng = np.random.default_rng(71)
        for _ in range(100):
            d = int(rng.integers(1, 4))
            lam = float(rng.uniform(0.05, 0.49))
            lambda_a = float(rng.uniform(1.01, 2.5))
            s = float(rng.uniform(1.001, 4.0))
            got = dim_lower_bound(DimensionInput((lam,) * d, lambda_a, s))
            expected = isotropic_closed_form(lam, lambda_a, s, d)
            assert got.value == pytest.approx(expected, abs=1e-12)

    def test_one_dim_closed_form(self):
        rng = np.random.default_rng(72)
        for _ in range(100):
            lam = float(rng.uniform(0.05, 0.49))
            lambda_a = float(rng.uniform(1.01, 3.0))
            s = float(rng.uniform(1.001, 5.0))
            got = dim_lower_bound(DimensionInput((lam,), lambda_a, s))
            assert got.value == pytest.approx(
                one_dim_closed_form(lam, lambda_a, s), abs=1e-12)

    def test_spec_numbers_1d(self):
        # lambda_1 = 0.45, three maps so lambda(A) = 1.35, s = 2
        got = dim_lower_bound(DimensionInput((0.45,), 1.35, 2.0))
        a1 = math.log(0.45) / -math.log(1.35) + 1.0
        assert got.value == pytest.approx(1.0 - 1.0 / (a1 + 1.0), abs=1e-12)

    def test_limit_toward_full_dimension(self):
        for d, lam, lambda_a in [(1, 0.45, 1.35), (2, 0.3, 1.4), (3, 0.2, 1.2)]:
            values = []
            for k in range(1, 7):
                inp = DimensionInput((lam,) * d, lambda_a, 1.0 + 10.0 ** -k)
                values.append(dim_lower_bound(inp).value)
            assert all(b >= a for a, b in zip(values, values[1:]))
            assert d - values[-1] < 1e-3

    def test_partition_properties(self):
        rng = np.random.default_rng(73)
        for _ in range(50):
            d = int(rng.integers(1, 5))
            inp = random_admissible(rng, d)
            res = dim_lower_bound(inp)
            combined = sorted(res.k1 + res.k2 + res.k3)
            assert combined == list(range(d))
            assert not (set(res.k1) & set(res.k2))
            assert 0.0 <= res.value <= d

    def test_permutation_invariance(self):
        rng = np.random.default_rng(74)
        lambdas = (0.12, 0.31, 0.44)
        base = dim_lower_bound(DimensionInput(lambdas, 1.7, 2.3)).value
        for perm in itertools.permutations(lambdas):
            assert dim_lower_bound(DimensionInput(perm, 1.7, 2.3)).value == base

    def test_witness_is_candidate(self):
        rng = np.random.default_rng(75)
        for _ in range(20):
            inp = random_admissible(rng, 3)
            res = dim_lower_bound(inp)
            a = axis_exponents(inp)
            shift = (inp.s - 1) / 3
            candidates = a + [ai + shift for ai in a]
            assert min(abs(res.p_star - c) for c in candidates) < 1e-12

    def test_witness_attains_minimum_brute(self):
        # evaluate the expression on a fine p grid; the candidate minimum
        # must not be beaten anywhere (piecewise monotone between candidates)
        rng = np.random.default_rng(76)
        for _ in range(10):
            inp = random_admissible(rng, 3)
            res = dim_lower_bound(inp)
            a = axis_exponents(inp)
            shift = (inp.s - 1) / 3
            log_inv = -math.log(inp.lambda_a)
            for p in np.linspace(min(a) * 0.5, (max(a) + shift) * 1.5, 400):
                if p <= 0:
                    continue
                k1 = [i for i, ai in enumerate(a) if ai >= p]
                k2 = [i for i, ai in enumerate(a) if ai + shift <= p]
                k3 = [i for i in range(3) if i not in k1 and i not in k2]
                value = (len(k1) + len(k2) * (1 - (inp.s - 1) / (3 * p))
                         + len(k3) / (3 * p)
                         + sum(math.log(inp.lambdas[i]) for i in k3)
                         / (p * log_inv))
                # only candidate p values are admissible minimizers
                if any(abs(p - c) < 1e-9 for c in
                       a + [ai + shift for ai in a]):
                    assert value >= res.value - 1e-9


class TestDichotomy:
    def test_harmonic_full_measure(self):
        verdict = garsia_hausdorff_criterion(
            DichotomyInput(1.0, HFamily.power(1, 1)))
        assert verdict is DichotomyVerdict.FULL_MEASURE

    def test_quadratic_zero_measure(self):
        verdict = garsia_hausdorff_criterion(
            DichotomyInput(1.0, HFamily.power(1, 2)))
        assert verdict is DichotomyVerdict.ZERO_MEASURE

    def test_constant_below_one(self):
        verdict = garsia_hausdorff_criterion(
            DichotomyInput(0.9, HFamily.constant(1.0)))
        assert verdict is DichotomyVerdict.FULL_MEASURE

    def test_zero_families(self):
        assert garsia_hausdorff_criterion(
            DichotomyInput(0.5, HFamily.constant(0.0))) is \
            DichotomyVerdict.ZERO_MEASURE
        assert garsia_hausdorff_criterion(
            DichotomyInput(1.0, HFamily.power(0, 1))) is \
            DichotomyVerdict.ZERO_MEASURE

    def test_power_below_one_always_diverges(self):
        verdict = garsia_hausdorff_criterion(
            DichotomyInput(0.7, HFamily.power(1, 5)))
        assert verdict is DichotomyVerdict.FULL_MEASURE

    def test_custom_undecided(self):
        verdict = garsia_hausdorff_criterion(
            DichotomyInput(1.0, HFamily.custom([1, 0.5, 0.25])))
        assert verdict is DichotomyVerdict.UNDECIDED

    def test_totality_on_analytic_inputs(self):
        rng = np.random.default_rng(80)
        for _ in range(50):
            s = float(rng.uniform(0.01, 1.0))
            if rng.random() < 0.5:
                h = HFamily.constant(float(rng.choice([0.0, rng.uniform(0.1, 3)])))
            else:
                h = HFamily.power(float(rng.choice([0.0, rng.uniform(0.1, 3)])),
                                  float(rng.uniform(0, 3)))
            verdict = garsia_hausdorff_criterion(DichotomyInput(s, h))
            assert verdict in (DichotomyVerdict.ZERO_MEASURE,
                               DichotomyVerdict.FULL_MEASURE)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            DichotomyInput(0.0, HFamily.constant(1.0))
        with pytest.raises(ValueError):
            DichotomyInput(1.5, HFamily.constant(1.0))
        with pytest.raises(ValueError):
            DichotomyInput(1.0, HFamily.power(1, -1))  # unbounded h
