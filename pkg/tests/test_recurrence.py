"""Flow sets: membership, escape and hitting times, exit regions."""

import numpy as np
import pytest

from conftest import scan_hitting_time
from kacflow import (
    ConfigurationError,
    ConstantFunction,
    CylinderSet,
    ExprFunction,
    FlowMeasure,
    FlowPoint,
    GraphSet,
    IntervalUnion,
    InvalidExitWidth,
    NonRecurrentWithinBudget,
    PiecewiseConstant,
    RoofFunction,
    SetValidationError,
    StateSet,
    UnsupportedExactIntegration,
    adjusted_return_time,
    bar_mu_of_set,
    escape_time,
    evolve,
    exit_region,
    hitting_time,
    member,
    projection_integral,
    sample_flow_points,
    validate_flow_set,
)
from kacflow.systems import ExpandingMap


@pytest.fixture
def half_cylinder(half_interval):
    return CylinderSet(half_interval, 0.0, 0.5)


@pytest.fixture
def band_graph(half_interval):
    h1 = ExprFunction("x/2")
    return GraphSet(half_interval, h1, ExprFunction("x/2 + 0.25"), width_sup=0.2500001)


class TestMember:
    def test_inside(self, half_cylinder):
        assert member(half_cylinder, FlowPoint(0.25, 0.1))

    def test_outside_base(self, half_cylinder):
        assert not member(half_cylinder, FlowPoint(0.75, 0.1))

    def test_half_open_in_time(self, half_cylinder):
        assert member(half_cylinder, FlowPoint(0.25, 0.0))
        assert not member(half_cylinder, FlowPoint(0.25, 0.5))

    def test_graph_membership(self, band_graph):
        # h1(0.2) = 0.1 <= 0.3 < 0.35 = h2(0.2)
        assert member(band_graph, FlowPoint(0.2, 0.3))
        assert not member(band_graph, FlowPoint(0.2, 0.05))
        assert not member(band_graph, FlowPoint(0.2, 0.35))


class TestEscape:
    def test_zero_outside(self, half_cylinder):
        assert escape_time(half_cylinder, FlowPoint(0.75, 0.1)) == 0.0

    def test_cylinder_distance_to_top(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.0, 0.5)
        assert escape_time(A, FlowPoint(0, 0.25)) == 0.25

    def test_graph_distance_to_upper_height(self, band_graph):
        assert escape_time(band_graph, FlowPoint(0.2, 0.3)) == pytest.approx(0.05)


class TestHitting:
    def test_three_cycle_inside(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.0, 0.5)
        assert hitting_time(A, FlowPoint(0, 0.25), three_cycle_flow) == pytest.approx(5.75)

    def test_three_cycle_outside(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.0, 0.5)
        assert hitting_time(A, FlowPoint(1, 0.0), three_cycle_flow) == pytest.approx(5.0)

    def test_below_entry_no_crossing(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.25, 0.5)
        assert hitting_time(A, FlowPoint(0, 0.0), three_cycle_flow) == pytest.approx(0.25)

    def test_budget_exhaustion(self, rotation_flow):
        A = CylinderSet(IntervalUnion([(0.0, 0.001)]), 0.0, 0.5)
        with pytest.raises(NonRecurrentWithinBudget):
            hitting_time(A, FlowPoint(0.5, 0.0), rotation_flow, max_steps=3)

    def test_hitting_at_least_escape(self, doubling_flow, half_cylinder):
        rng = np.random.default_rng(0)
        xs, ts = sample_flow_points(doubling_flow, rng, 500)
        for i in range(500):
            p = FlowPoint(float(xs[i]), float(ts[i]))
            assert hitting_time(half_cylinder, p, doubling_flow) >= escape_time(half_cylinder, p)

    def test_identity_is_bit_exact(self, three_cycle_flow, doubling_flow, half_cylinder):
        cases = [
            (three_cycle_flow, CylinderSet(StateSet([0]), 0.0, 0.5), FlowPoint(0, 0.25)),
            (doubling_flow, half_cylinder, FlowPoint(0.3, 0.2)),
        ]
        for fm, A, p in cases:
            e = escape_time(A, p)
            n = hitting_time(A, p, fm)
            adj = adjusted_return_time(A, p, fm)
            assert n == e + adj

    def test_adjusted_requires_membership(self, doubling_flow, half_cylinder):
        with pytest.raises(ConfigurationError):
            adjusted_return_time(half_cylinder, FlowPoint(0.75, 0.1), doubling_flow)

    def test_full_space_adjusted_is_zero(self, doubling_flow):
        A = CylinderSet(IntervalUnion([(0.0, 1.0)]), 0.0, 1.0)
        rng = np.random.default_rng(1)
        xs, ts = sample_flow_points(doubling_flow, rng, 100)
        for i in range(100):
            p = FlowPoint(float(xs[i]), float(ts[i]))
            assert adjusted_return_time(A, p, doubling_flow) == pytest.approx(0.0, abs=1e-12)

    def test_graph_hitting_example(self, doubling_flow, band_graph):
        # Inside the band: exit at h2, return to [0,1/2), re-enter at h1(end).
        p = FlowPoint(0.2, 0.3)
        n = hitting_time(band_graph, p, doubling_flow)
        end = 0.4  # f(0.2) is back in [0, 1/2) immediately
        expected = 1.0 - 0.3 + 0.2  # tau^1 - t + h1(0.4)
        assert n == pytest.approx(expected)

    def test_landing_point_is_at_entry(self, doubling_flow, half_cylinder):
        rng = np.random.default_rng(2)
        A = half_cylinder
        xs = doubling_flow.sys.sample_conditional(A.I, rng, 200)
        ts = A.t1 + rng.random(200) * A.width
        for i in range(200):
            p = FlowPoint(float(xs[i]), float(ts[i]))
            n = hitting_time(A, p, doubling_flow)
            q = evolve(p, n, doubling_flow)
            assert A.I.contains(q.x)
            assert A.t1 - 1e-9 <= q.t < A.t2


class TestScanAgreement:
    def test_cylinder_scan(self, doubling_flow):
        rng = np.random.default_rng(3)
        step = 1e-4 * doubling_flow.tau.lower_bound
        for _ in range(30):
            a = rng.uniform(0.0, 0.5)
            I = IntervalUnion([(a, a + rng.uniform(0.2, 0.5 - 1e-9))])
            t1 = rng.uniform(0.0, 0.3)
            A = CylinderSet(I, t1, t1 + rng.uniform(0.2, 0.6))
            xs, ts = sample_flow_points(doubling_flow, rng, 1)
            p = FlowPoint(float(xs[0]), float(ts[0]))
            closed = hitting_time(A, p, doubling_flow)
            scanned = scan_hitting_time(A, p, doubling_flow, step, closed + 1000 * step)
            assert abs(closed - scanned) <= step * 1.000001

    def test_three_cycle_scan(self, three_cycle_flow):
        step = 1e-4
        A = CylinderSet(StateSet([0]), 0.1, 0.6)
        for p in (FlowPoint(0, 0.3), FlowPoint(1, 1.1), FlowPoint(2, 0.0)):
            closed = hitting_time(A, p, three_cycle_flow)
            scanned = scan_hitting_time(A, p, three_cycle_flow, step, closed + 1000 * step)
            assert abs(closed - scanned) <= step * 1.000001

    def test_graph_scan(self, doubling_flow, band_graph):
        rng = np.random.default_rng(4)
        step = 1e-4
        for _ in range(10):
            xs, ts = sample_flow_points(doubling_flow, rng, 1)
            p = FlowPoint(float(xs[0]), float(ts[0]))
            closed = hitting_time(band_graph, p, doubling_flow)
            scanned = scan_hitting_time(band_graph, p, doubling_flow, step, closed + 1000 * step)
            assert abs(closed - scanned) <= step * 1.000001


class TestExitRegion:
    def test_remark_example(self, half_interval):
        A = CylinderSet(half_interval, 0.0, 1.0)
        R = exit_region(A, 0.1)
        assert R.I is A.I
        assert R.t1 == pytest.approx(0.9)
        assert R.t2 == 1.0

    def test_full_width_is_whole_set(self, half_interval):
        A = CylinderSet(half_interval, 0.25, 0.75)
        R = exit_region(A, A.width)
        assert (R.t1, R.t2) == (A.t1, A.t2)

    def test_width_out_of_range(self, half_interval):
        A = CylinderSet(half_interval, 0.0, 0.5)
        with pytest.raises(InvalidExitWidth):
            exit_region(A, 0.6)
        with pytest.raises(InvalidExitWidth):
            exit_region(A, 0.0)

    def test_measure_shrinks_linearly(self, doubling_flow, half_interval):
        A = CylinderSet(half_interval, 0.0, 1.0)
        for s in (0.5, 0.1, 0.01):
            assert bar_mu_of_set(doubling_flow, exit_region(A, s)) == pytest.approx(0.5 * s)


class TestValidation:
    def test_t2_above_piecewise_roof(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.0, 1.2)
        with pytest.raises(SetValidationError):
            validate_flow_set(A, three_cycle_flow)

    def test_t2_above_closed_form_roof_spot_checked(self, rotation_flow):
        # tau(0.5) = 1, so t2 = 1.5 must be caught by sampling near 0.5.
        A = CylinderSet(IntervalUnion([(0.4, 0.6)]), 0.0, 1.5)
        with pytest.raises(SetValidationError):
            validate_flow_set(A, rotation_flow)

    def test_valid_cylinder_passes(self, rotation_flow):
        validate_flow_set(CylinderSet(IntervalUnion([(0.0, 0.3)]), 0.2, 1.2), rotation_flow)

    def test_cylinder_needs_ordered_times(self, half_interval):
        with pytest.raises(ConfigurationError):
            CylinderSet(half_interval, 0.5, 0.5)
        with pytest.raises(ConfigurationError):
            CylinderSet(half_interval, -0.1, 0.5)

    def test_graph_height_above_roof(self, doubling_flow, half_interval):
        A = GraphSet(half_interval, ConstantFunction(0.5), ConstantFunction(1.25))
        with pytest.raises(SetValidationError):
            validate_flow_set(A, doubling_flow)

    def test_graph_negative_lower_height(self, doubling_flow, half_interval):
        A = GraphSet(half_interval, ExprFunction("x - 0.2"), ConstantFunction(0.5))
        with pytest.raises(SetValidationError):
            validate_flow_set(A, doubling_flow)

    def test_graph_crossing_heights(self, doubling_flow, half_interval):
        A = GraphSet(half_interval, ExprFunction("0.5 - x"), ConstantFunction(0.3))
        with pytest.raises(SetValidationError):
            validate_flow_set(A, doubling_flow)

    def test_parallel_offset_must_match(self, doubling_flow, half_interval):
        A = GraphSet(
            half_interval, ExprFunction("x/2"), ExprFunction("x/2 + 0.25"), parallel_offset=0.3
        )
        with pytest.raises(SetValidationError):
            validate_flow_set(A, doubling_flow)

    def test_band_graph_valid(self, doubling_flow, band_graph):
        validate_flow_set(band_graph, doubling_flow)


class TestFlowSetMeasure:
    def test_three_cycle_cylinder(self, three_cycle_flow):
        A = CylinderSet(StateSet([0]), 0.0, 0.5)
        assert bar_mu_of_set(three_cycle_flow, A) == pytest.approx(1 / 12)

    def test_doubling_half_cylinder(self, doubling_flow, half_interval):
        A = CylinderSet(half_interval, 0.0, 1.0)
        assert bar_mu_of_set(doubling_flow, A) == pytest.approx(0.5)

    def test_parallel_graph_reduces_to_cylinder_formula(self, doubling_flow, half_interval):
        h1 = ExprFunction("x/2")
        A = GraphSet(half_interval, h1, h1.shifted(0.25), parallel_offset=0.25)
        assert bar_mu_of_set(doubling_flow, A) == pytest.approx(0.25 * 0.5)

    def test_quadrature_route(self, doubling_flow, band_graph):
        assert bar_mu_of_set(doubling_flow, band_graph) == pytest.approx(0.125, rel=1e-12)

    def test_biased_expanding_closed_form_unsupported(self):
        fm = FlowMeasure(
            ExpandingMap(2, [0.3, 0.7]), RoofFunction(ConstantFunction(1.0))
        )
        from kacflow import DigitCylinder

        A = GraphSet(DigitCylinder(2, (0,)), ExprFunction("x/2"), ExprFunction("x/2 + 0.1"))
        with pytest.raises(UnsupportedExactIntegration):
            bar_mu_of_set(fm, A)

    def test_projection_integral_piecewise(self, three_cycle_flow):
        g = PiecewiseConstant.per_state([1.0, 10.0, 100.0])
        got = projection_integral(three_cycle_flow, StateSet([0, 2]), g)
        assert got == pytest.approx((1.0 + 100.0) / 3)
