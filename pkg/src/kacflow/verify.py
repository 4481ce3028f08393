"""Built-in invariant suites for the `verify` subcommand.

Runs every module's invariants at desk scale with a single master seed:
measure preservation, exact discrete return-time identities, compensated
summation accuracy, the flow semigroup law, flow-measure invariance and
normalization, mean-return estimates against their closed forms, reductions
between the set families, exit-region convergence, roof-family linearity,
and the randomized exact-rational suite.

Rows are fully deterministic for a fixed (seed, workers): no timestamps, no
wall times, and all estimator reductions happen in worker order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import identities, oracle
from .recurrence import (
    CylinderSet,
    GraphSet,
    bar_mu_of_set,
    escape_time,
    hitting_time,
    member,
)
from .roofs import (
    ConstantFunction,
    ExprFunction,
    PiecewiseConstant,
    RoofFunction,
    birkhoff_roof_sum,
)
from .suspension import FlowMeasure, FlowPoint, evolve, evolve_array, sample_flow_points
from .systems import (
    DigitCylinder,
    ExpandingMap,
    FinitePermutation,
    IntervalUnion,
    IrrationalRotation,
    StateSet,
    first_return_base,
    first_return_times,
)


@dataclass(frozen=True)
class CheckRow:
    suite: str
    check: str
    passed: bool
    observed: str
    expected: str
    criterion: str


def _row(suite, check, passed, observed, expected, criterion) -> CheckRow:
    return CheckRow(suite, check, bool(passed), str(observed), str(expected), str(criterion))


def _zrow(suite: str, check: str, report: identities.EstimateReport) -> CheckRow:
    return _row(
        suite,
        check,
        report.within(4.0) and report.valid,
        f"{report.mc_estimate!r}+-{report.mc_stderr!r}",
        repr(report.analytic_value),
        "|z|<=4",
    )


def _catalog(seed: int):
    """The fixed verification systems: doubling, three-cycle, rotation."""
    doubling = FlowMeasure(ExpandingMap(2), RoofFunction(ConstantFunction(1.0)))
    half = IntervalUnion([(0.0, 0.5)])
    cyl_d = CylinderSet(half, 0.0, 1.0)

    three = FlowMeasure(
        FinitePermutation([1, 2, 0]),
        RoofFunction(PiecewiseConstant.per_state([1.0, 2.0, 3.0])),
    )
    cyl_3 = CylinderSet(StateSet([0]), 0.0, 0.5)

    rotation = FlowMeasure(
        IrrationalRotation(0.6180339887),
        RoofFunction(ExprFunction("2 + cos(2*pi*x)"), lower_bound=1.0, integral=2.0, sup=3.0),
    )
    cyl_r = CylinderSet(IntervalUnion([(0.0, 0.3)]), 0.2, 1.2)
    return [
        ("doubling", doubling, cyl_d),
        ("three_cycle", three, cyl_3),
        ("rotation", rotation, cyl_r),
    ]


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


def _suite_base(seed: int, N: int) -> list[CheckRow]:
    rows = []
    for name, fm, A in _catalog(seed):
        rng = np.random.default_rng([seed, 101])
        xs = fm.sys.sample(rng, N)
        pushed = fm.sys.apply_array(xs)
        p = fm.sys.measure(A.I)
        hit = float(A.I.contains_array(pushed).mean())
        se = math.sqrt(p * (1 - p) / N)
        rows.append(
            _row(
                "base",
                f"measure_preservation[{name}]",
                abs(hit - p) <= 4 * se,
                repr(hit),
                repr(p),
                "|empirical - mu(I)| <= 4*stderr",
            )
        )

    perm = FinitePermutation([2, 0, 3, 4, 1])
    for states in ([0], [1, 3]):
        I = StateSet(states)
        total = sum(
            (perm.weights[x] * first_return_base(perm, I, x) for x in states), Fraction(0)
        )
        rows.append(
            _row(
                "base",
                f"discrete_kac[states={states}]",
                total == 1,
                str(total),
                "1",
                "exact rational equality",
            )
        )

    bern = ExpandingMap(2, [0.3, 0.7])
    I = DigitCylinder(2, (0, 1))
    rng = np.random.default_rng([seed, 102])
    xs = bern.sample(rng, N)
    inside = I.contains_array(xs)
    counts, ok = first_return_times(bern, I, xs[inside], max_steps=10_000)
    vals = np.zeros(N)
    vals[np.flatnonzero(inside)[ok]] = counts[ok]
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(N))
    rows.append(
        _row(
            "base",
            "return_sum_decomposition",
            abs(mean - 1.0) <= 4 * se and int((~ok).sum()) == 0,
            f"{mean!r}+-{se!r}",
            "1.0",
            "|mean - 1| <= 4*stderr",
        )
    )
    return rows


def _suite_roof(seed: int, N: int) -> list[CheckRow]:
    rows = []
    d = ExpandingMap(2)
    tau = RoofFunction(ConstantFunction(0.5))
    n = 100_000
    s = birkhoff_roof_sum(tau, d, 0.32, n)
    rows.append(
        _row("roof", "constant_roof_exact", s == 0.5 * n, repr(s), repr(0.5 * n), "bitwise equality")
    )
    tau01 = RoofFunction(ConstantFunction(0.1))
    s = birkhoff_roof_sum(tau01, d, 0.32, n)
    exact = Fraction(0.1) * n
    correctly_rounded = float(exact)
    ulp = math.ulp(correctly_rounded)
    rows.append(
        _row(
            "roof",
            "compensated_tenths",
            abs(s - correctly_rounded) <= ulp,
            repr(s),
            repr(correctly_rounded),
            "within 1 ulp of correctly rounded",
        )
    )
    return rows


def _suite_kernel(seed: int, N: int, workers: int) -> list[CheckRow]:
    rows = []
    cases = 10_000
    for name, fm, A in _catalog(seed):
        rng = np.random.default_rng([seed, 103])
        n = cases // 3
        xs, ts = sample_flow_points(fm, rng, n)
        ss = rng.exponential(2.0, n)
        us = rng.exponential(2.0, n)
        mism = 0
        max_err = 0.0
        for i in range(n):
            x = int(xs[i]) if fm.sys.finite else float(xs[i])
            p = FlowPoint(x, float(ts[i]))
            two = evolve(evolve(p, float(ss[i]), fm), float(us[i]), fm)
            one = evolve(p, float(ss[i]) + float(us[i]), fm)
            if two.x != one.x:
                mism += 1
            else:
                tol = 1e-9 * (1.0 + ss[i] + us[i])
                max_err = max(max_err, abs(two.t - one.t) / tol)
        rows.append(
            _row(
                "kernel",
                f"semigroup[{name}]",
                mism == 0 and max_err <= 1.0,
                f"mismatches={mism};max_err_ratio={max_err:.3g}",
                "mismatches=0;max_err_ratio<=1",
                "base points equal, |dt| <= 1e-9*(1+s+u)",
            )
        )

    for name, fm, A in _catalog(seed)[:2]:
        rng = np.random.default_rng([seed, 104])
        xs, ts = sample_flow_points(fm, rng, N)
        ys, us = evolve_array(fm, xs, ts, 0.7)
        target = bar_mu_of_set(fm, A)
        mask = A.I.contains_array(ys) & (us >= A.t1) & (us < A.t2)
        emp = float(mask.mean())
        se = math.sqrt(target * (1 - target) / N)
        rows.append(
            _row(
                "kernel",
                f"flow_invariance[{name}]",
                abs(emp - target) <= 4 * se,
                repr(emp),
                repr(target),
                "|pushforward mass - measure| <= 4*stderr",
            )
        )

    fm = _catalog(seed)[0][1]
    full_cyl = CylinderSet(IntervalUnion([(0.0, 1.0)]), 0.0, 1.0)
    rows.append(
        _row(
            "kernel",
            "normalization_cylinder",
            bar_mu_of_set(fm, full_cyl) == 1.0,
            repr(bar_mu_of_set(fm, full_cyl)),
            "1.0",
            "exact",
        )
    )
    fm3 = _catalog(seed)[1][1]
    full_graph = GraphSet(
        StateSet([0, 1, 2]),
        ConstantFunction(0.0),
        PiecewiseConstant.per_state([1.0, 2.0, 3.0]),
    )
    rows.append(
        _row(
            "kernel",
            "normalization_graph",
            bar_mu_of_set(fm3, full_graph) == 1.0,
            repr(bar_mu_of_set(fm3, full_graph)),
            "1.0",
            "exact",
        )
    )
    return rows


def _suite_recurrence(seed: int, N: int) -> list[CheckRow]:
    rows = []
    for name, fm, A in _catalog(seed):
        rng = np.random.default_rng([seed, 105])
        n = 200
        xs = fm.sys.sample_conditional(A.I, rng, n)
        ts = A.t1 + rng.random(n) * A.width
        ok_order = True
        ok_landing = True
        eps = 1e-6 * fm.tau.lower_bound
        for i in range(n):
            x = int(xs[i]) if fm.sys.finite else float(xs[i])
            p = FlowPoint(x, float(ts[i]))
            h = hitting_time(A, p, fm)
            e = escape_time(A, p)
            if h < e:
                ok_order = False
            landed = evolve(p, h, fm)
            if not (A.I.contains(landed.x) and A.t1 - 1e-9 <= landed.t < A.t2):
                ok_landing = False
            # Just before the hit the orbit is still outside, unless the
            # re-entry is contiguous (adjusted return time ~ 0).
            if h - e > 2 * eps:
                before = evolve(p, h - eps, fm)
                if member(A, before) and not (
                    abs(before.t - A.t1) <= 1e-9 or abs(before.t - A.t2) <= 1e-9
                ):
                    ok_landing = False
        rows.append(
            _row(
                "recurrence",
                f"hitting_geometry[{name}]",
                ok_order and ok_landing,
                f"order_ok={ok_order};landing_ok={ok_landing}",
                "order_ok=True;landing_ok=True",
                "hit >= escape; evolve(p,hit) lands at entry; not inside just before",
            )
        )
    return rows


def _suite_formulas(seed: int, N: int, workers: int) -> list[CheckRow]:
    rows = []
    for k, (name, fm, A) in enumerate(_catalog(seed)):
        rep = identities.mc_mean_return(A, fm, N, seed=seed * 1000 + 200 + k, workers=workers)
        rows.append(_zrow("formulas", f"mean_return_vs_analytic[{name}]", rep))

    for name, fm, A in _catalog(seed):
        f1, f2 = identities.cylinder_rhs_forms(A, fm)
        rel = abs(f1 - f2) / max(abs(f1), 1.0)
        rows.append(
            _row(
                "formulas",
                f"analytic_forms_agree[{name}]",
                rel <= 1e-12,
                repr(f1),
                repr(f2),
                "relative difference <= 1e-12",
            )
        )

    name, fm, A = _catalog(seed)[0]
    q = identities.entropy_quotient(A.I, fm)
    target = fm.normalizer / fm.sys.measure(A.I)
    rows.append(
        _row(
            "formulas",
            "entropy_quotient_identity",
            abs(q - target) <= 1e-12 * max(abs(target), 1.0),
            repr(q),
            repr(target),
            "equals integral(tau)/mu(I) to 1e-12 relative",
        )
    )

    # Graph-set reductions: constant heights match the cylinder value; a
    # declared parallel set matches the constant-width closed form.
    const_graph = GraphSet(A.I, ConstantFunction(0.0), ConstantFunction(1.0))
    bd = identities.graph_mean_return_analytic(const_graph, fm)
    cyl_value = identities.cylinder_mean_return_analytic(CylinderSet(A.I, 0.0, 1.0), fm)
    rows.append(
        _row(
            "formulas",
            "graph_reduces_to_cylinder",
            bd.exact and abs(bd.total - cyl_value) <= 1e-12 * max(abs(cyl_value), 1.0),
            repr(bd.total),
            repr(cyl_value),
            "exact reduction, 1e-12 relative",
        )
    )
    h1 = ExprFunction("x/2")
    par = GraphSet(A.I, h1, h1.shifted(0.25), parallel_offset=0.25)
    pval = identities.parallel_sides_mean_return(
        par, fm, check_samples=N // 2, seed=seed * 1000 + 210, workers=workers
    )
    bd2 = identities.graph_mean_return_analytic(par, fm)
    rows.append(
        _row(
            "formulas",
            "parallel_sides_consistency",
            abs(pval - bd2.total) <= 1e-12 * max(abs(pval), 1.0),
            repr(bd2.total),
            repr(pval),
            "parallel closed form matches term decomposition",
        )
    )

    rep = identities.check_unnormalized_identity(
        A, fm, N, seed=seed * 1000 + 220, workers=workers
    )
    rows.append(_zrow("formulas", "unnormalized_identity[doubling]", rep))

    limit = identities.exit_region_limit_target(A, fm)
    reports = identities.exit_region_limit(
        A, fm, [0.05], N, seed=seed * 1000 + 230, workers=workers
    )
    r = reports[0]
    bias = 0.05 * fm.sys.measure(A.I) / (2 * fm.normalizer)
    bound = bias + 4 * r.mc_stderr
    rows.append(
        _row(
            "formulas",
            "exit_region_limit[doubling,s=0.05]",
            abs(r.mc_estimate - limit) <= bound and r.within(4.0),
            repr(r.mc_estimate),
            repr(limit),
            "|estimate - limit| <= s/2*mu(I)/integral(tau) + 4*stderr",
        )
    )

    lin = identities.linearity_scan(A, fm, [1.0, 1.5, 2.0, 3.0])
    slope_target = 1.0 / fm.sys.measure(A.I)
    rows.append(
        _row(
            "formulas",
            "linearity_in_roof_integral",
            lin.max_residual <= 1e-12 and abs(lin.slope - slope_target) <= 1e-12,
            f"slope={lin.slope!r};residual={lin.max_residual!r}",
            f"slope={slope_target!r};residual<=1e-12",
            "affine in integral(tau) with slope 1/mu(I)",
        )
    )
    return rows


def _suite_oracle(seed: int, n_models: int = 100) -> list[CheckRow]:
    rows = []
    rng = np.random.default_rng([seed, 300])
    failures = 0
    float_fail = 0
    for _ in range(n_models):
        model = random_model(rng)
        n = model.n_states
        for x in range(n):
            t2 = model.roofs[x] / 2
            if oracle.mean_return(model, [x], 0, t2) != oracle.mean_return_analytic(
                model, [x], 0, t2
            ):
                failures += 1
            if oracle.discrete_kac(model, [x]) != 1:
                failures += 1
            if not oracle.identity_suite(model, [x], 0, t2).ok:
                failures += 1
        if not _float_matches_rational(model):
            float_fail += 1
    rows.append(
        _row(
            "oracle",
            f"randomized_exact_suite[{n_models} models]",
            failures == 0,
            f"failures={failures}",
            "failures=0",
            "exact rational equality on all identities",
        )
    )
    rows.append(
        _row(
            "oracle",
            "float_matches_rational",
            float_fail == 0,
            f"mismatches={float_fail}",
            "mismatches=0",
            "float evaluators within 1e-12 relative of exact values",
        )
    )
    return rows


def random_model(rng: np.random.Generator, max_states: int = 8) -> oracle.RationalFlowModel:
    """A random single-cycle permutation with random small-denominator roofs."""
    n = int(rng.integers(1, max_states + 1))
    order = list(rng.permutation(n))
    perm = [0] * n
    for i in range(n):
        perm[order[i]] = order[(i + 1) % n]
    roofs = [
        Fraction(int(rng.integers(1, 65)), int(rng.integers(1, 17)))
        for _ in range(n)
    ]
    return oracle.RationalFlowModel(perm, roofs)


def _float_matches_rational(model: oracle.RationalFlowModel, rel: float = 1e-12) -> bool:
    sys = FinitePermutation(model.perm, model.weights)
    tau = RoofFunction(PiecewiseConstant.per_state([float(r) for r in model.roofs]))
    fm = FlowMeasure(sys, tau)
    for x in range(model.n_states):
        t2 = model.roofs[x] / 2
        A = CylinderSet(StateSet([x]), 0.0, float(t2))
        got = identities.cylinder_mean_return_analytic(A, fm)
        want = float(oracle.mean_return_analytic(model, [x], 0, t2))
        if abs(got - want) > rel * max(abs(want), 1.0):
            return False
    return True


def run_verification(seed: int = 0, samples: int = 200_000, workers: int = 1) -> list[CheckRow]:
    """All suites; deterministic for fixed (seed, workers)."""
    rows = []
    rows += _suite_base(seed, samples)
    rows += _suite_roof(seed, samples)
    rows += _suite_kernel(seed, samples, workers)
    rows += _suite_recurrence(seed, samples)
    rows += _suite_formulas(seed, samples, workers)
    rows += _suite_oracle(seed)
    return rows
