"""Mean-return identities: Monte Carlo estimators and analytic values.

Every identity comes with two independent routes: a seeded Monte Carlo
estimate of the defining integral on one side and an analytic closed form on
the other. Estimates carry normal-approximation standard errors, and the
acceptance rule everywhere is the 4-standard-error band (per-test false
alarm around 6e-5). Estimators split their sample budget across workers with
streams derived from (seed, worker index) and reduce partial moments in
worker order, so a fixed (seed, workers) pair reproduces bit-identical
output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    EmptyProjection,
    IdentityCheckFailed,
    ScaleRangeError,
    SetValidationError,
    ZeroEntropyBase,
)
from .recurrence import (
    CylinderSet,
    FlowSet,
    GraphSet,
    bar_mu_of_set,
    exit_region,
    return_orbit_stats,
    validate_flow_set,
)
from .suspension import FlowMeasure
from .systems import DEFAULT_MAX_STEPS, BaseSet

_REL_TOL = 1e-12


@dataclass(frozen=True)
class EstimateReport:
    """A Monte Carlo estimate next to its analytic target."""

    quantity: str
    mc_estimate: float
    mc_stderr: float
    analytic_value: float
    n_samples: int
    z_score: float
    discarded_samples: int = 0

    @property
    def valid(self) -> bool:
        """Discards must stay below one per thousand samples."""
        return self.n_samples > 0 and self.discarded_samples < 1e-3 * self.n_samples

    def within(self, k: float = 4.0) -> bool:
        """|mc - analytic| <= k * stderr (exact match when stderr is zero)."""
        diff = abs(self.mc_estimate - self.analytic_value)
        if self.mc_stderr == 0.0:
            return diff == 0.0
        return diff <= k * self.mc_stderr


def _z_score(mc: float, analytic: float, stderr: float) -> float:
    if math.isnan(analytic):
        return math.nan
    diff = mc - analytic
    if stderr > 0.0:
        return diff / stderr
    if diff == 0.0:
        return 0.0
    return math.copysign(math.inf, diff)


def _make_report(quantity, n, mean, m2, discarded, analytic, scale=1.0):
    """Assemble a report from pooled moments, with an optional linear rescale."""
    est = scale * mean
    se = abs(scale) * math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return EstimateReport(
        quantity=quantity,
        mc_estimate=est,
        mc_stderr=se,
        analytic_value=analytic,
        n_samples=n,
        z_score=_z_score(est, analytic, se),
        discarded_samples=discarded,
    )


# ---------------------------------------------------------------------------
# Worker plumbing
# ---------------------------------------------------------------------------


def _chunk_sizes(N: int, workers: int) -> list[int]:
    base, rem = divmod(N, workers)
    return [base + 1 if w < rem else base for w in range(workers)]


def _worker_rng(seed: int, w: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(w)])


def _run_workers(fn, N: int, seed: int, workers: int):
    """fn(rng, size) -> per-chunk payload; returns payloads in worker order."""
    if workers < 1:
        raise ConfigurationError("worker count must be at least 1")
    sizes = _chunk_sizes(N, workers)
    if workers == 1:
        return [fn(_worker_rng(seed, 0), sizes[0])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda w: fn(_worker_rng(seed, w), sizes[w]), range(workers)))


def _combine_moments(parts):
    """Pool (count, mean, M2, discarded) chunks in order (Chan's update)."""
    n, mean, m2, disc = 0, 0.0, 0.0, 0
    for cn, cm, cm2, cd in parts:
        disc += cd
        if cn == 0:
            continue
        tot = n + cn
        delta = cm - mean
        mean += delta * cn / tot
        m2 += cm2 + delta * delta * n * cn / tot
        n = tot
    return n, mean, m2, disc


def _moments(values: np.ndarray):
    n = len(values)
    if n == 0:
        return 0, 0.0, 0.0
    mean = float(values.mean())
    m2 = float(np.square(values - mean).sum())
    return n, mean, m2


# ---------------------------------------------------------------------------
# Conditioned samplers
# ---------------------------------------------------------------------------


def _sample_cylinder(A: CylinderSet, fm: FlowMeasure, rng, n: int):
    xs = fm.sys.sample_conditional(A.I, rng, n)
    ts = A.t1 + rng.random(n) * A.width
    return xs, ts


def _sample_graph(A: GraphSet, fm: FlowMeasure, rng, n: int):
    """x with density h(x) on I via rejection, then t uniform on [h1, h2)."""
    bound = A.width_bound()
    if bound is None:
        raise ConfigurationError(
            "sampling a graph set with non-constant width needs a declared width_sup"
        )
    xs = np.empty(n, dtype=np.int64 if fm.sys.finite else np.float64)
    got = 0
    while got < n:
        batch = max(n - got, 4096)
        cand = fm.sys.sample_conditional(A.I, rng, batch)
        widths = A.width_array(cand)
        if widths.max() > bound * (1 + 1e-12):
            raise SetValidationError(
                f"observed fiber width {widths.max()} exceeds the declared bound {bound}"
            )
        acc = rng.random(batch) * bound < widths
        k = min(int(acc.sum()), n - got)
        xs[got : got + k] = cand[np.flatnonzero(acc)[:k]]
        got += k
    lo = A.h1.eval_array(xs)
    ts = lo + rng.random(n) * A.width_array(xs)
    return xs, ts


def _hitting_values(A: FlowSet, fm: FlowMeasure, xs, ts, max_steps):
    """Vectorized hitting times for conditioned points of A; (values, n_discarded)."""
    counts, sums, ends, ok = return_orbit_stats(fm, A, xs, max_steps)
    if isinstance(A, CylinderSet):
        esc = A.t2 - ts
        adj = (sums - A.t2) + A.t1
    else:
        exit_h = A.h2.eval_array(xs)
        esc = exit_h - ts
        adj = (sums - exit_h) + A.h1.eval_array(ends)
    values = esc + adj
    return values[ok], int((~ok).sum())


def _require_positive_projection(A: FlowSet, fm: FlowMeasure) -> float:
    mu_I = fm.sys.measure(A.I)
    if mu_I <= 0.0:
        raise EmptyProjection("the base projection carries no measure")
    return mu_I


# ---------------------------------------------------------------------------
# Mean return: Monte Carlo and analytic sides
# ---------------------------------------------------------------------------


def mc_mean_return(
    A: FlowSet,
    fm: FlowMeasure,
    N: int,
    seed: int,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
    analytic: float | None = None,
) -> EstimateReport:
    """Mean hitting time over the normalized flow measure on A.

    Samples the conditioned measure directly (inverse CDF / digit-prefix
    conditioning on the projection, width-weighted rejection for graph
    sets), so small sets cost no extra proposals.
    """
    _require_positive_projection(A, fm)
    if analytic is None:
        analytic = _default_mean_return_target(A, fm)

    def chunk(rng, size):
        if isinstance(A, CylinderSet):
            xs, ts = _sample_cylinder(A, fm, rng, size)
        else:
            xs, ts = _sample_graph(A, fm, rng, size)
        values, discarded = _hitting_values(A, fm, xs, ts, max_steps)
        return (*_moments(values), discarded)

    n, mean, m2, disc = _combine_moments(_run_workers(chunk, N, seed, workers))
    return _make_report("mean_return", n, mean, m2, disc, analytic)


def _default_mean_return_target(A: FlowSet, fm: FlowMeasure) -> float:
    if isinstance(A, CylinderSet):
        return cylinder_mean_return_analytic(A, fm)
    try:
        breakdown = graph_mean_return_analytic(A, fm)
    except ConfigurationError:
        return math.nan  # varying heights: no closed form without sampling
    return breakdown.total if breakdown.exact else math.nan


def cylinder_rhs_forms(A: CylinderSet, fm: FlowMeasure) -> tuple[float, float]:
    """The two printed forms of the cylinder mean-return value.

    escape + (1 - flow measure of A) * integral(tau)/mu(I), and
    width/2 + (integral(tau) - width * mu(I)) / mu(I).
    """
    mu_I = _require_positive_projection(A, fm)
    w = A.width
    bar_mu = bar_mu_of_set(fm, A)
    stat_form = w / 2 + (1.0 - bar_mu) * fm.normalizer / mu_I
    direct_form = w / 2 + (fm.normalizer - w * mu_I) / mu_I
    return stat_form, direct_form


def cylinder_mean_return_analytic(A: CylinderSet, fm: FlowMeasure) -> float:
    """Analytic mean return time to a cylinder, cross-checked across forms."""
    stat_form, direct_form = cylinder_rhs_forms(A, fm)
    scale = max(abs(stat_form), abs(direct_form), 1.0)
    if abs(stat_form - direct_form) > _REL_TOL * scale:
        raise IdentityCheckFailed(
            f"mean-return forms disagree: {stat_form!r} vs {direct_form!r}"
        )
    return stat_form


def cylinder_mean_escape(A: CylinderSet) -> float:
    """Mean escape time over the normalized measure on the cylinder."""
    return A.width / 2


# ---------------------------------------------------------------------------
# Cross-section returns and the entropy quotient
# ---------------------------------------------------------------------------


def cross_section_mean_return(
    I: BaseSet,
    fm: FlowMeasure,
    N: int,
    seed: int,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> EstimateReport:
    """Mean roof sum over one base return, averaged over I on the section.

    Analytic value integral(tau)/mu(I): the flow spends one roof integral of
    time per base return, concentrated on the section copy of I.
    """
    mu_I = fm.sys.measure(I)
    if mu_I <= 0.0:
        raise EmptyProjection("the cross-section set carries no measure")
    analytic = fm.normalizer / mu_I

    def chunk(rng, size):
        xs = fm.sys.sample_conditional(I, rng, size)
        _, sums, _, ok = return_orbit_stats(fm, _section(I), xs, max_steps)
        return (*_moments(sums[ok]), int((~ok).sum()))

    n, mean, m2, disc = _combine_moments(_run_workers(chunk, N, seed, workers))
    return _make_report("cross_section_mean_return", n, mean, m2, disc, analytic)


def _section(I: BaseSet) -> CylinderSet:
    """A degenerate-height stand-in so orbit loops can target a base set."""
    return CylinderSet(I, 0.0, 1.0)


def entropy_quotient(I: BaseSet, fm: FlowMeasure) -> float:
    """Entropy of the induced first-return map over the entropy of the time-1 map.

    Both entropies come from the analytic base entropy: the induced map has
    entropy h/mu(I), the time-1 map h/integral(tau); their quotient must
    equal integral(tau)/mu(I), which is asserted and returned.
    """
    h = fm.sys.entropy
    if h <= 0.0:
        raise ZeroEntropyBase(
            f"base entropy is {h:g}; the quotient is undefined at 0/0"
        )
    mu_I = fm.sys.measure(I)
    if mu_I <= 0.0:
        raise EmptyProjection("the cross-section set carries no measure")
    induced_entropy = h / mu_I
    flow_entropy = h / fm.normalizer
    quotient = induced_entropy / flow_entropy
    direct = fm.normalizer / mu_I
    if abs(quotient - direct) > _REL_TOL * max(abs(direct), 1.0):
        raise IdentityCheckFailed(
            f"entropy quotient {quotient!r} drifted from {direct!r}"
        )
    return quotient


# ---------------------------------------------------------------------------
# Graph sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GraphReturnBreakdown:
    """Mean return to a graph set as escape + roof-sum + entry-correction."""

    total: float
    escape_term: float
    roof_term: float
    correction_term: float
    stderr: float
    n_samples: int
    exact: bool
    discarded_samples: int = 0


def graph_mean_return_analytic(
    A: GraphSet,
    fm: FlowMeasure,
    N: int = 0,
    seed: int = 0,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> GraphReturnBreakdown:
    """Mean return time to a graph set, by its three-term decomposition.

    Width-weighted averages over the projection: the mean escape width/2,
    the roof sum over one base return, and the entry-height correction
    h1(end) - h2(start). Exact when the system is finite or the heights are
    constant/parallel; otherwise each term is estimated over the conditioned
    base measure (pass N and seed).
    """
    mu_I = _require_positive_projection(A, fm)

    c1, c2 = A.h1.constant_value, A.h2.constant_value
    if c1 is not None and c2 is not None:
        # Constant heights: the set is the cylinder I x [c1, c2).
        width = c2 - c1
        roof_term = fm.normalizer / mu_I
        return GraphReturnBreakdown(
            total=width / 2 + roof_term - width,
            escape_term=width / 2,
            roof_term=roof_term,
            correction_term=-width,
            stderr=0.0,
            n_samples=0,
            exact=True,
        )
    if A.parallel_offset is not None:
        # Parallel sides: the width is constant, so the roof term reduces by
        # the return-sum decomposition and the correction telescopes to -c.
        c = float(A.parallel_offset)
        roof_term = fm.normalizer / mu_I
        return GraphReturnBreakdown(
            total=c / 2 + roof_term - c,
            escape_term=c / 2,
            roof_term=roof_term,
            correction_term=-c,
            stderr=0.0,
            n_samples=0,
            exact=True,
        )
    if fm.sys.finite:
        return _graph_breakdown_finite(A, fm)
    if N <= 0:
        raise ConfigurationError(
            "graph sets with varying heights need Monte Carlo samples (pass N and seed)"
        )
    return _graph_breakdown_mc(A, fm, N, seed, workers, max_steps)


def _graph_terms(A: GraphSet, fm: FlowMeasure, xs, max_steps):
    """Per-point width weights and the three per-point term values."""
    counts, sums, ends, ok = return_orbit_stats(fm, A, xs, max_steps)
    widths = A.width_array(xs)
    esc = widths / 2
    corr = A.h1.eval_array(ends) - A.h2.eval_array(xs)
    return widths, esc, sums, corr, ok


def _graph_breakdown_finite(A: GraphSet, fm: FlowMeasure) -> GraphReturnBreakdown:
    states = np.asarray(A.I.states, dtype=np.int64)
    widths, esc, sums, corr, ok = _graph_terms(A, fm, states, 4 * fm.sys.n_states)
    if not ok.all():
        raise SetValidationError("graph set is unreachable from some of its own states")
    w_state = np.array([float(fm.sys.weights[s]) for s in states])
    mass = float(np.sum(w_state * widths))
    if mass <= 0.0:
        raise EmptyProjection("graph set has empty fibers everywhere")

    def avg(v):
        return float(np.sum(w_state * widths * v)) / mass

    e, r, c = avg(esc), avg(sums), avg(corr)
    return GraphReturnBreakdown(
        total=e + r + c, escape_term=e, roof_term=r, correction_term=c,
        stderr=0.0, n_samples=0, exact=True,
    )


def _graph_breakdown_mc(
    A: GraphSet, fm: FlowMeasure, N: int, seed: int, workers: int, max_steps: int
) -> GraphReturnBreakdown:
    def chunk(rng, size):
        xs = fm.sys.sample_conditional(A.I, rng, size)
        widths, esc, sums, corr, ok = _graph_terms(A, fm, xs, max_steps)
        w = widths[ok]
        v = (esc + sums + corr)[ok]
        wv = w * v
        return {
            "n": int(ok.sum()),
            "discarded": int((~ok).sum()),
            "sum_w": float(w.sum()),
            "sum_w2": float(np.square(w).sum()),
            "sum_wv": float(wv.sum()),
            "sum_wv2": float(np.square(wv).sum()),
            "sum_w_wv": float((w * wv).sum()),
            "sum_w_esc": float((w * esc[ok]).sum()),
            "sum_w_roof": float((w * sums[ok]).sum()),
            "sum_w_corr": float((w * corr[ok]).sum()),
        }

    parts = _run_workers(chunk, N, seed, workers)
    tot = {k: math.fsum(p[k] for p in parts) for k in parts[0]}
    n = int(tot["n"])
    if n < 2 or tot["sum_w"] <= 0.0:
        raise EmptyProjection("no usable samples for the graph-set estimate")
    ratio = tot["sum_wv"] / tot["sum_w"]
    mean_w = tot["sum_w"] / n
    var_wv = (tot["sum_wv2"] - tot["sum_wv"] ** 2 / n) / (n - 1)
    var_w = (tot["sum_w2"] - tot["sum_w"] ** 2 / n) / (n - 1)
    cov = (tot["sum_w_wv"] - tot["sum_w"] * tot["sum_wv"] / n) / (n - 1)
    var_ratio = max(var_wv - 2 * ratio * cov + ratio**2 * var_w, 0.0)
    stderr = math.sqrt(var_ratio / n) / mean_w
    return GraphReturnBreakdown(
        total=ratio,
        escape_term=tot["sum_w_esc"] / tot["sum_w"],
        roof_term=tot["sum_w_roof"] / tot["sum_w"],
        correction_term=tot["sum_w_corr"] / tot["sum_w"],
        stderr=stderr,
        n_samples=n,
        exact=False,
        discarded_samples=int(tot["discarded"]),
    )


def parallel_sides_mean_return(
    A: GraphSet,
    fm: FlowMeasure,
    check_samples: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> float:
    """Mean return for constant-width graph sets: c/2 + (integral(tau) - c mu(I))/mu(I).

    Also verifies, by Monte Carlo, that the lower-height telescoping average
    h1(end) - h1(start) vanishes over the induced return map (the induced
    normalized measure is invariant). Pass check_samples=0 to skip.
    """
    c = A.width_bound() if A.parallel_offset is None else float(A.parallel_offset)
    if c is None or (A.parallel_offset is None and A.h1.constant_value is None):
        raise ConfigurationError("parallel-sides value needs a declared constant width")
    mu_I = _require_positive_projection(A, fm)
    value = c / 2 + (fm.normalizer - c * mu_I) / mu_I
    if check_samples > 0 and A.h1.constant_value is None:
        def chunk(rng, size):
            xs = fm.sys.sample_conditional(A.I, rng, size)
            _, _, ends, ok = return_orbit_stats(fm, A, xs, max_steps)
            diffs = (A.h1.eval_array(ends) - A.h1.eval_array(xs))[ok]
            return (*_moments(diffs), int((~ok).sum()))

        n, mean, m2, _ = _combine_moments(_run_workers(chunk, check_samples, seed, workers))
        se = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
        if abs(mean) > 4.0 * se:
            raise IdentityCheckFailed(
                f"telescoping average {mean:g} is {abs(mean)/se if se else math.inf:.1f} "
                "standard errors from zero"
            )
    return value


# ---------------------------------------------------------------------------
# Exit-region limit
# ---------------------------------------------------------------------------


def exit_region_limit_target(A: CylinderSet, fm: FlowMeasure) -> float:
    """The s -> 0 limit of the scaled exit-region return integral: 1 - flow measure of A."""
    return 1.0 - bar_mu_of_set(fm, A)


def exit_region_limit(
    A: CylinderSet,
    fm: FlowMeasure,
    s_list: Sequence[float],
    N: int,
    seed: int,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> list[EstimateReport]:
    """(1/s) * integral of the return time over the exit region, per s.

    The estimate at finite s has exact expectation
    (1 - flow measure of A) + s * mu(I) / (2 integral(tau)), which is the
    analytic value the z-score is measured against; the limit itself is
    exit_region_limit_target.
    """
    mu_I = _require_positive_projection(A, fm)
    limit = exit_region_limit_target(A, fm)
    reports = []
    for s in s_list:
        region = exit_region(A, float(s))
        weight = bar_mu_of_set(fm, region) / float(s)
        analytic = limit + float(s) * mu_I / (2 * fm.normalizer)

        def chunk(rng, size, region=region):
            xs, ts = _sample_cylinder(region, fm, rng, size)
            values, discarded = _hitting_values(A, fm, xs, ts, max_steps)
            return (*_moments(values), discarded)

        n, mean, m2, disc = _combine_moments(_run_workers(chunk, N, seed, workers))
        reports.append(
            _make_report(
                f"exit_limit[s={s:g}]", n, mean, m2, disc, analytic, scale=weight
            )
        )
    return reports


# ---------------------------------------------------------------------------
# Unnormalized identity and linearity in the roof
# ---------------------------------------------------------------------------


def check_unnormalized_identity(
    A: CylinderSet,
    fm: FlowMeasure,
    N: int,
    seed: int,
    workers: int = 1,
    max_steps: int = DEFAULT_MAX_STEPS,
) -> EstimateReport:
    """Unnormalized mean return against escape + width * (1 - flow measure).

    The left side is the conditioned Monte Carlo mean scaled by the measure
    of A; the right side is fully analytic.
    """
    bar_mu = bar_mu_of_set(fm, A)
    if bar_mu <= 0.0:
        raise EmptyProjection("the cylinder carries no flow measure")
    analytic = bar_mu * cylinder_mean_escape(A) + A.width * (1.0 - bar_mu)

    def chunk(rng, size):
        xs, ts = _sample_cylinder(A, fm, rng, size)
        values, discarded = _hitting_values(A, fm, xs, ts, max_steps)
        return (*_moments(values), discarded)

    n, mean, m2, disc = _combine_moments(_run_workers(chunk, N, seed, workers))
    return _make_report("unnormalized_identity", n, mean, m2, disc, analytic, scale=bar_mu)


@dataclass(frozen=True)
class LinearityRow:
    scale: float
    roof_integral: float
    mean_return: float


@dataclass(frozen=True)
class LinearityResult:
    rows: tuple[LinearityRow, ...]
    slope: float
    intercept: float
    max_residual: float


def linearity_scan(
    A: CylinderSet, fm: FlowMeasure, c_list: Sequence[float]
) -> LinearityResult:
    """Analytic mean returns for the roof family c * tau, as a function of c.

    The set A stays fixed, so the values must be affine in the roof integral
    with slope 1/mu(I); the residual against that line is asserted below
    1e-12 of the value scale.
    """
    mu_I = _require_positive_projection(A, fm)
    if len(c_list) < 2:
        raise ConfigurationError("linearity scan needs at least two scale factors")
    rows = []
    for c in c_list:
        scaled = FlowMeasure(fm.sys, fm.tau.scaled(float(c)))
        try:
            validate_flow_set(A, scaled)
        except SetValidationError as exc:
            raise ScaleRangeError(f"set invalid for roof scale {c:g}: {exc}") from exc
        rows.append(
            LinearityRow(
                scale=float(c),
                roof_integral=scaled.normalizer,
                mean_return=cylinder_mean_return_analytic(A, scaled),
            )
        )
    slope = 1.0 / mu_I
    intercept = rows[0].mean_return - slope * rows[0].roof_integral
    scale = max(abs(r.mean_return) for r in rows)
    residual = max(
        abs(r.mean_return - (intercept + slope * r.roof_integral)) for r in rows
    )
    if residual > _REL_TOL * max(scale, 1.0):
        raise IdentityCheckFailed(
            f"mean returns are not affine in the roof integral (residual {residual:g})"
        )
    return LinearityResult(tuple(rows), slope, intercept, residual)
