"""Exact rational oracle: identities must hold with equality, not tolerance."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kacflow import (
    ConfigurationError,
    CylinderSet,
    FinitePermutation,
    FlowMeasure,
    PiecewiseConstant,
    RoofFunction,
    SetValidationError,
    StateSet,
    cylinder_mean_return_analytic,
    graph_mean_return_analytic,
)
from kacflow.oracle import (
    RationalFlowModel,
    cross_section_mean,
    discrete_kac,
    exit_estimate,
    exit_limit,
    graph_mean_return,
    graph_mean_return_terms,
    identity_suite,
    mean_return,
    mean_return_analytic,
)
from kacflow.verify import random_model


@pytest.fixture
def three_cycle() -> RationalFlowModel:
    return RationalFlowModel([1, 2, 0], [1, 2, 3])


class TestModelValidation:
    def test_rejects_non_bijection(self):
        with pytest.raises(ConfigurationError):
            RationalFlowModel([0, 0, 1], [1, 1, 1])

    def test_rejects_non_invariant_weights(self):
        with pytest.raises(ConfigurationError):
            RationalFlowModel(
                [1, 2, 0], [1, 1, 1], [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]
            )

    def test_rejects_multi_cycle(self):
        with pytest.raises(ConfigurationError):
            RationalFlowModel([1, 0, 3, 2], [1, 1, 1, 1])

    def test_rejects_nonpositive_roofs(self):
        with pytest.raises(ConfigurationError):
            RationalFlowModel([1, 2, 0], [1, 0, 3])

    def test_uniform_weights_accepted(self, three_cycle):
        assert three_cycle.weights == (Fraction(1, 3),) * 3
        assert three_cycle.roof_integral == 2


class TestMeanReturn:
    def test_three_cycle_value(self, three_cycle):
        assert mean_return(three_cycle, [0], 0, Fraction(1, 2)) == Fraction(23, 4)

    def test_matches_analytic_exactly(self, three_cycle):
        got = mean_return(three_cycle, [0], 0, Fraction(1, 2))
        assert got == mean_return_analytic(three_cycle, [0], 0, Fraction(1, 2))

    def test_fixed_point_full_fiber(self):
        c = Fraction(7, 2)
        model = RationalFlowModel([0], [c])
        assert mean_return(model, [0], 0, c) == c / 2

    def test_four_cycle_two_states(self):
        model = RationalFlowModel([1, 2, 3, 0], [1, 1, 1, 1])
        got = mean_return(model, [0, 2], 0, 1)
        # Constant-roof closed form: tau/mu(I) * (1 - mu(I)/2) = 2 * 3/4.
        assert got == Fraction(3, 2)

    def test_invalid_cylinder_rejected(self, three_cycle):
        with pytest.raises(SetValidationError):
            mean_return(three_cycle, [0], 0, 2)  # t2 above roof(0) = 1
        with pytest.raises(SetValidationError):
            mean_return(three_cycle, [0], Fraction(1, 2), Fraction(1, 2))


class TestDiscreteKac:
    def test_four_cycle_pair(self):
        model = RationalFlowModel([1, 2, 3, 0], [1, 1, 1, 1])
        assert discrete_kac(model, [0, 2]) == 1

    def test_all_states(self, three_cycle):
        assert discrete_kac(three_cycle, [0, 1, 2]) == 1

    def test_single_states(self, three_cycle):
        for x in range(3):
            assert discrete_kac(three_cycle, [x]) == 1


class TestIdentitySuite:
    def test_three_cycle_unnormalized_sides(self, three_cycle):
        suite = identity_suite(three_cycle, [0], 0, Fraction(1, 2))
        assert suite.ok
        by_name = {c.name: c for c in suite.checks}
        stat = by_name["unnormalized_identity"]
        assert stat.lhs == Fraction(23, 48)
        assert stat.rhs == Fraction(23, 48)

    def test_fixed_point_degenerate(self):
        model = RationalFlowModel([0], [1])
        suite = identity_suite(model, [0], 0, Fraction(1, 2))
        assert suite.ok

    def test_constant_roof_full_cylinder_check_included(self):
        model = RationalFlowModel([1, 2, 3, 0], [1, 1, 1, 1])
        suite = identity_suite(model, [0, 2], 0, 1)
        names = [c.name for c in suite.checks]
        assert "constant_roof_full_cylinder" in names
        assert suite.ok

    def test_randomized_models_all_exact(self):
        rng = np.random.default_rng(20260810)
        for _ in range(100):
            model = random_model(rng)
            for x in range(model.n_states):
                t2 = model.roofs[x] / 2
                assert identity_suite(model, [x], 0, t2).ok

    @given(st.data())
    @settings(max_examples=80, deadline=None)
    def test_identities_hold_for_arbitrary_cylinders(self, data):
        n = data.draw(st.integers(1, 8), label="states")
        order = data.draw(st.permutations(range(n)), label="cycle order")
        perm = [0] * n
        for i in range(n):
            perm[order[i]] = order[(i + 1) % n]
        roofs = [
            Fraction(data.draw(st.integers(1, 64)), data.draw(st.integers(1, 16)))
            for _ in range(n)
        ]
        model = RationalFlowModel(perm, roofs)
        states = data.draw(
            st.lists(st.integers(0, n - 1), min_size=1, max_size=n, unique=True),
            label="projection",
        )
        top = min(model.roofs[s] for s in states)
        t2 = top * Fraction(data.draw(st.integers(1, 16)), 16)
        t1 = t2 * Fraction(data.draw(st.integers(0, 15)), 16)
        assert identity_suite(model, states, t1, t2).ok


class TestExitRegion:
    def test_three_cycle_limit(self, three_cycle):
        assert exit_limit(three_cycle, [0], 0, Fraction(1, 2)) == Fraction(11, 12)

    def test_estimate_is_affine_in_width(self, three_cycle):
        t2 = Fraction(1, 2)
        bar_mu = Fraction(1, 3) * t2 / 2
        for s in (Fraction(1, 2), Fraction(1, 4), Fraction(1, 8)):
            got = exit_estimate(three_cycle, [0], 0, t2, s)
            expected = 1 - bar_mu + s * Fraction(1, 3) / (2 * 2)
            assert got == expected


class TestGraphSets:
    def test_terms_sum_to_total(self, three_cycle):
        h1 = {0: Fraction(1, 4), 1: Fraction(1, 2), 2: Fraction(3, 2)}
        h2 = {0: Fraction(3, 4), 1: Fraction(3, 2), 2: Fraction(5, 2)}
        total = graph_mean_return(three_cycle, [0, 1, 2], h1, h2)
        e, r, c = graph_mean_return_terms(three_cycle, [0, 1, 2], h1, h2)
        assert e + r + c == total

    def test_parallel_sides_closed_form(self, three_cycle):
        c = Fraction(1, 4)
        h1 = {0: Fraction(1, 8), 1: Fraction(1, 2), 2: Fraction(1)}
        h2 = {s: v + c for s, v in h1.items()}
        got = graph_mean_return(three_cycle, [0, 1, 2], h1, h2)
        mu_I = Fraction(1)
        expected = c / 2 + (three_cycle.roof_integral - c * mu_I) / mu_I
        assert got == expected

    def test_empty_fibers_are_skipped(self, three_cycle):
        h1 = {0: Fraction(0), 1: Fraction(1, 2), 2: Fraction(1)}
        h2 = {0: Fraction(1, 2), 1: Fraction(1, 2), 2: Fraction(1)}  # only state 0 has mass
        got = graph_mean_return(three_cycle, [0, 1, 2], h1, h2)
        # Equivalent to the cylinder {0} x [0, 1/2).
        assert got == mean_return(three_cycle, [0], 0, Fraction(1, 2))

    def test_heights_out_of_range_rejected(self, three_cycle):
        with pytest.raises(SetValidationError):
            graph_mean_return(three_cycle, [0], {0: Fraction(1, 2)}, {0: Fraction(3, 2)})


class TestFloatAgreement:
    def _float_flow(self, model: RationalFlowModel) -> FlowMeasure:
        sys = FinitePermutation(model.perm, model.weights)
        tau = RoofFunction(PiecewiseConstant.per_state([float(r) for r in model.roofs]))
        return FlowMeasure(sys, tau)

    def test_cylinder_evaluator_matches_rational(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            model = random_model(rng)
            fm = self._float_flow(model)
            for x in range(model.n_states):
                t2 = model.roofs[x] / 2
                A = CylinderSet(StateSet([x]), 0.0, float(t2))
                want = float(mean_return_analytic(model, [x], 0, t2))
                got = cylinder_mean_return_analytic(A, fm)
                assert got == pytest.approx(want, rel=1e-12)

    def test_graph_evaluator_matches_rational(self, three_cycle):
        fm = self._float_flow(three_cycle)
        h1 = {0: Fraction(1, 4), 1: Fraction(1, 2), 2: Fraction(3, 2)}
        h2 = {0: Fraction(3, 4), 1: Fraction(3, 2), 2: Fraction(5, 2)}
        from kacflow import GraphSet

        A = GraphSet(
            StateSet([0, 1, 2]),
            PiecewiseConstant.per_state([float(h1[s]) for s in range(3)]),
            PiecewiseConstant.per_state([float(h2[s]) for s in range(3)]),
        )
        bd = graph_mean_return_analytic(A, fm)
        assert bd.exact
        want = float(graph_mean_return(three_cycle, [0, 1, 2], h1, h2))
        assert bd.total == pytest.approx(want, rel=1e-12)

    def test_cross_section_matches(self, three_cycle):
        got = cross_section_mean(three_cycle, [0])
        assert got == 6
