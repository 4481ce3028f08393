"""Base systems: maps, exact measures, sampling, first returns."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, brute_force_first_return
from kacflow import (
    ConfigurationError,
    DigitCylinder,
    ExpandingMap,
    FinitePermutation,
    IntervalUnion,
    IrrationalRotation,
    NonRecurrentWithinBudget,
    StateSet,
    UnsupportedExactIntegration,
    apply_base,
    first_return_base,
    first_return_times,
    integrate_mu,
    mu_of_set,
)


class TestApply:
    def test_expanding_doubles_mod_one(self):
        assert apply_base(ExpandingMap(2), 0.2) == pytest.approx(0.4)
        assert apply_base(ExpandingMap(2), 0.75) == pytest.approx(0.5)

    def test_rotation_translates_mod_one(self):
        assert apply_base(IrrationalRotation(GOLDEN), 0.1) == pytest.approx(0.7180339887)

    def test_three_cycle(self):
        sys = FinitePermutation([1, 2, 0])
        assert apply_base(sys, 2) == 0

    def test_apply_array_matches_scalar(self):
        for sys in (ExpandingMap(3, [0.2, 0.3, 0.5]), IrrationalRotation(0.3)):
            xs = np.linspace(0.0, 0.99, 37)
            got = sys.apply_array(xs)
            want = [sys.apply(float(x)) for x in xs]
            assert got == pytest.approx(want)


class TestMeasures:
    def test_rotation_interval(self):
        assert mu_of_set(IrrationalRotation(GOLDEN), IntervalUnion([(0.0, 0.5)])) == 0.5

    def test_bernoulli_digit_prefix(self):
        sys = ExpandingMap(2, [0.3, 0.7])
        assert mu_of_set(sys, DigitCylinder(2, (0, 1))) == pytest.approx(0.21)

    def test_three_cycle_state(self):
        sys = FinitePermutation([1, 2, 0])
        assert mu_of_set(sys, StateSet([0])) == pytest.approx(1 / 3)
        assert sys.measure_exact(StateSet([0, 2])) == Fraction(2, 3)

    def test_digit_cylinder_on_rotation_rejected(self):
        with pytest.raises(ConfigurationError):
            mu_of_set(IrrationalRotation(GOLDEN), DigitCylinder(2, (0,)))

    def test_intervals_on_biased_expanding_rejected(self):
        with pytest.raises(ConfigurationError):
            mu_of_set(ExpandingMap(2, [0.3, 0.7]), IntervalUnion([(0.0, 0.5)]))

    def test_intervals_on_uniform_expanding_are_lebesgue(self):
        assert mu_of_set(ExpandingMap(2), IntervalUnion([(0.1, 0.3), (0.6, 0.7)])) == pytest.approx(0.3)

    def test_digit_cylinder_interval(self):
        assert DigitCylinder(2, (0, 1)).interval == (0.25, 0.5)


class TestSetValidation:
    def test_overlapping_intervals_rejected(self):
        with pytest.raises(ConfigurationError):
            IntervalUnion([(0.0, 0.5), (0.4, 0.6)])

    def test_interval_outside_unit_rejected(self):
        with pytest.raises(ConfigurationError):
            IntervalUnion([(0.5, 1.2)])

    def test_adjacent_intervals_allowed(self):
        u = IntervalUnion([(0.0, 0.25), (0.25, 0.5)])
        assert u.length == pytest.approx(0.5)

    def test_bad_digits_rejected(self):
        with pytest.raises(ConfigurationError):
            DigitCylinder(2, (0, 2))

    def test_empty_state_set_rejected(self):
        with pytest.raises(ConfigurationError):
            StateSet([])


class TestSystemValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            ExpandingMap(2, [0.4, 0.4])

    def test_weights_must_be_positive(self):
        with pytest.raises(ConfigurationError):
            ExpandingMap(2, [0.0, 1.0])

    def test_entropy_values(self):
        assert ExpandingMap(2).entropy == pytest.approx(math.log(2))
        p = [0.3, 0.7]
        assert ExpandingMap(2, p).entropy == pytest.approx(-sum(q * math.log(q) for q in p))
        assert IrrationalRotation(GOLDEN).entropy == 0.0
        assert FinitePermutation([1, 2, 0]).entropy == 0.0

    def test_invertibility_flags(self):
        assert not ExpandingMap(2).invertible
        assert IrrationalRotation(GOLDEN).invertible
        assert FinitePermutation([1, 0]).invertible

    def test_non_bijection_rejected(self):
        with pytest.raises(ConfigurationError):
            FinitePermutation([0, 0, 1])

    def test_non_invariant_weights_rejected(self):
        # A 3-cycle cannot carry the weights (1/2, 1/4, 1/4).
        with pytest.raises(ConfigurationError):
            FinitePermutation([1, 2, 0], [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)])

    def test_multi_cycle_rejected(self):
        with pytest.raises(ConfigurationError):
            FinitePermutation([1, 0, 3, 2])

    def test_rotation_number_range(self):
        with pytest.raises(ConfigurationError):
            IrrationalRotation(1.5)


class TestSampling:
    def test_rotation_uniform_mass(self):
        rng = np.random.default_rng(1)
        xs = IrrationalRotation(GOLDEN).sample(rng, 50_000)
        p = float((xs < 0.5).mean())
        assert abs(p - 0.5) <= 4 * math.sqrt(0.25 / 50_000)

    def test_bernoulli_digit_mass(self):
        sys = ExpandingMap(2, [0.3, 0.7])
        rng = np.random.default_rng(2)
        xs = sys.sample(rng, 50_000)
        p = float((xs >= 0.5).mean())  # first digit 1
        assert abs(p - 0.7) <= 4 * math.sqrt(0.21 / 50_000)

    def test_digit_frequencies_converge(self):
        sys = ExpandingMap(2)
        rng = np.random.default_rng(3)
        xs = sys.sample(rng, 20_000)
        # Average frequency of 1s over the first 20 binary digits.
        freq = 0.0
        ys = xs.copy()
        for _ in range(20):
            ys = ys * 2
            bits = np.floor(ys)
            freq += float(bits.mean())
            ys -= bits
        freq /= 20
        assert abs(freq - 0.5) <= 4 * math.sqrt(0.25 / (20_000 * 20))

    def test_finite_frequencies(self):
        sys = FinitePermutation([1, 2, 0])
        rng = np.random.default_rng(4)
        xs = sys.sample(rng, 60_000)
        for s in range(3):
            p = float((xs == s).mean())
            assert abs(p - 1 / 3) <= 4 * math.sqrt((1 / 3) * (2 / 3) / 60_000)

    def test_conditional_samples_stay_inside(self):
        rng = np.random.default_rng(5)
        cases = [
            (IrrationalRotation(GOLDEN), IntervalUnion([(0.1, 0.2), (0.7, 0.9)])),
            (ExpandingMap(2, [0.3, 0.7]), DigitCylinder(2, (1, 0))),
            (ExpandingMap(2), IntervalUnion([(0.25, 0.3)])),
            (FinitePermutation([1, 2, 0]), StateSet([0, 2])),
        ]
        for sys, I in cases:
            xs = sys.sample_conditional(I, rng, 5_000)
            assert I.contains_array(xs).all()

    def test_digit_prefix_conditional_distribution(self):
        # Conditioned on the prefix, the next digit keeps its weight.
        sys = ExpandingMap(2, [0.3, 0.7])
        rng = np.random.default_rng(6)
        I = DigitCylinder(2, (0,))
        xs = sys.sample_conditional(I, rng, 50_000)
        p = float((xs >= 0.25).mean())  # second digit 1 within [0, 1/2)
        assert abs(p - 0.7) <= 4 * math.sqrt(0.21 / 50_000)

    def test_measure_preserved_under_push(self):
        cases = [
            (ExpandingMap(2, [0.3, 0.7]), DigitCylinder(2, (1,))),
            (IrrationalRotation(GOLDEN), IntervalUnion([(0.2, 0.45)])),
            (FinitePermutation([1, 2, 0]), StateSet([1])),
        ]
        rng = np.random.default_rng(7)
        N = 100_000
        for sys, I in cases:
            xs = sys.apply_array(sys.sample(rng, N))
            p = mu_of_set(sys, I)
            phat = float(I.contains_array(xs).mean())
            assert abs(phat - p) <= 4 * math.sqrt(p * (1 - p) / N)


class TestFirstReturn:
    def test_three_cycle_returns_in_cycle_length(self):
        sys = FinitePermutation([1, 2, 0])
        assert first_return_base(sys, StateSet([0]), 0) == 3

    def test_rotation_frozen_example(self):
        # Orbit of 0.1: 0.7180..., 0.3361... -> second iterate lands in [0, 0.5).
        sys = IrrationalRotation(GOLDEN)
        assert first_return_base(sys, IntervalUnion([(0.0, 0.5)]), 0.1) == 2

    def test_doubling_prefix_matches_brute_force(self):
        sys = ExpandingMap(2)
        I = DigitCylinder(2, (0,))
        for x in (0.3, 0.7, 0.9, 0.6180339887):
            assert first_return_base(sys, I, x) == brute_force_first_return(sys, I, x)

    def test_budget_exceeded_raises(self):
        sys = IrrationalRotation(GOLDEN)
        with pytest.raises(NonRecurrentWithinBudget):
            first_return_base(sys, IntervalUnion([(0.0, 0.001)]), 0.5, max_steps=3)

    def test_vectorized_matches_scalar(self):
        sys = ExpandingMap(2)
        I = IntervalUnion([(0.0, 0.25)])
        rng = np.random.default_rng(8)
        xs = sys.sample(rng, 500)
        counts, ok = first_return_times(sys, I, xs)
        assert ok.all()
        for i in range(0, 500, 37):
            assert counts[i] == first_return_base(sys, I, float(xs[i]))

    def test_kac_sum_is_exactly_one(self):
        sys = FinitePermutation([2, 0, 3, 4, 1])
        for states in ([0], [1, 3], [0, 1, 2, 3, 4]):
            I = StateSet(states)
            total = sum(
                (sys.weights[x] * first_return_base(sys, I, x) for x in states),
                Fraction(0),
            )
            assert total == 1


class TestIntegrateMu:
    def test_constant(self):
        sys = IrrationalRotation(GOLDEN)
        pieces = [(IntervalUnion([(0.0, 1.0)]), 2.5)]
        assert integrate_mu(sys, pieces, mode="exact") == (2.5, 0.0)

    def test_three_cycle_average(self):
        sys = FinitePermutation([1, 2, 0])
        pieces = [(StateSet([s]), v) for s, v in enumerate((1.0, 2.0, 3.0))]
        value, err = integrate_mu(sys, pieces, mode="exact")
        assert value == pytest.approx(2.0)
        assert err == 0.0

    def test_exact_mode_rejects_callable(self):
        with pytest.raises(UnsupportedExactIntegration):
            integrate_mu(IrrationalRotation(GOLDEN), lambda x: x, mode="exact")

    def test_partition_must_cover(self):
        sys = IrrationalRotation(GOLDEN)
        with pytest.raises(ConfigurationError):
            integrate_mu(sys, [(IntervalUnion([(0.0, 0.5)]), 1.0)], mode="exact")

    def test_monte_carlo_matches_analytic(self):
        sys = IrrationalRotation(GOLDEN)
        rng = np.random.default_rng(9)
        value, err = integrate_mu(
            sys, lambda xs: 2 + np.cos(2 * np.pi * xs), mode="montecarlo", N=200_000, rng=rng
        )
        assert abs(value - 2.0) <= 4 * err


@given(
    st.lists(
        st.tuples(
            st.floats(0.0, 0.98, allow_nan=False), st.floats(0.005, 0.3, allow_nan=False)
        ),
        min_size=1,
        max_size=4,
    )
)
@settings(max_examples=60, deadline=None)
def test_interval_union_measure_additivity(raw):
    # Build disjoint intervals by sorting and clipping, then check that the
    # measure equals the summed lengths and membership agrees at midpoints.
    ivs = []
    cursor = 0.0
    for a, w in sorted(raw):
        lo = max(a, cursor)
        hi = min(lo + w, 1.0)
        if hi - lo > 1e-9:
            ivs.append((lo, hi))
            cursor = hi
    if not ivs:
        return
    u = IntervalUnion(ivs)
    assert u.length == pytest.approx(math.fsum(b - a for a, b in ivs))
    for a, b in ivs:
        assert u.contains((a + b) / 2)
        assert u.contains(a)
        assert not u.contains(b) or any(lo == b for lo, _ in ivs)
