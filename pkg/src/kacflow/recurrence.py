"""Flow sets and recurrence times.

Two families of measurable subsets of the suspension space:

* ``CylinderSet``: I x [t1, t2) with I a base set and t2 at most the roof
  minimum over I.
* ``GraphSet``: { (x, t) : h1(x) <= t < h2(x), x in I } for heights
  0 <= h1 <= h2 <= tau on I.

Hitting/return times are computed by base-return reduction: a point in the
set leaves through the upper boundary, crosses fibers until the base orbit
re-enters the projection, and re-enters the set at the entry height there.
No time stepping is involved; a fine-step membership scan exists in the test
suite as an independent oracle.

Conventions: membership is half-open in t, entry exactly on the lower
boundary counts as inside, and a point sitting on the entry boundary is in
the set already (its next hit is the next genuine entry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import (
    ConfigurationError,
    InvalidExitWidth,
    NonRecurrentWithinBudget,
    SetValidationError,
    UnsupportedExactIntegration,
)
from .roofs import BaseFunction, PiecewiseConstant
from .summation import CompensatedSum, vector_add
from .suspension import FlowMeasure, FlowPoint, _require_canonical
from .systems import DEFAULT_MAX_STEPS, BaseSet, DigitCylinder, IntervalUnion, StateSet


@dataclass(frozen=True)
class CylinderSet:
    """I x [t1, t2) in flow coordinates."""

    I: BaseSet
    t1: float
    t2: float

    def __post_init__(self):
        if not (0.0 <= self.t1 < self.t2):
            raise ConfigurationError(f"cylinder needs 0 <= t1 < t2, got [{self.t1}, {self.t2})")

    @property
    def width(self) -> float:
        return self.t2 - self.t1

    def describe(self) -> str:
        return f"{self.I.describe()}x[{self.t1:g},{self.t2:g})"


@dataclass(frozen=True)
class GraphSet:
    """Region between two height functions over a base set.

    ``parallel_offset`` declares h2 = h1 + c (exact constant width);
    ``width_sup`` declares an upper bound for h2 - h1, needed by the
    conditional sampler when the width is not constant.
    """

    I: BaseSet
    h1: BaseFunction
    h2: BaseFunction
    parallel_offset: float | None = None
    width_sup: float | None = None

    def __post_init__(self):
        if self.parallel_offset is not None and self.parallel_offset <= 0:
            raise ConfigurationError("parallel offset must be positive")

    def width_array(self, xs: np.ndarray) -> np.ndarray:
        if self.parallel_offset is not None:
            return np.full(len(xs), float(self.parallel_offset))
        return self.h2.eval_array(xs) - self.h1.eval_array(xs)

    def width_bound(self) -> float | None:
        """Best available upper bound for the fiber width h2 - h1."""
        if self.width_sup is not None:
            return float(self.width_sup)
        if self.parallel_offset is not None:
            return float(self.parallel_offset)
        c1, c2 = self.h1.constant_value, self.h2.constant_value
        if c1 is not None and c2 is not None:
            return c2 - c1
        return None

    def describe(self) -> str:
        return f"{self.I.describe()}x[{self.h1.describe()},{self.h2.describe()})"


FlowSet = Union[CylinderSet, GraphSet]


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_flow_set(
    A: FlowSet,
    fm: FlowMeasure,
    rng: np.random.Generator | None = None,
    spot_samples: int = 512,
) -> None:
    """Check a set against a flow before any sampling.

    Exact forms are checked exactly; closed-form roofs/heights are
    spot-checked on points sampled from the conditional measure on I.
    """
    mu_I = fm.sys.measure(projection(A))  # raises on incompatible representations
    if mu_I <= 0.0:
        raise SetValidationError("base projection has zero measure")
    rng = np.random.default_rng(0) if rng is None else rng
    if isinstance(A, CylinderSet):
        roof_min = fm.tau.min_on(A.I)
        if roof_min is not None:
            if A.t2 > roof_min:
                raise SetValidationError(
                    f"t2={A.t2:g} exceeds the roof minimum {roof_min:g} over the base set"
                )
            return
        if A.t2 <= fm.tau.lower_bound:
            return
        xs = fm.sys.sample_conditional(A.I, rng, spot_samples)
        bad = fm.tau.eval_array(xs) < A.t2
        if bad.any():
            raise SetValidationError(
                f"t2={A.t2:g} exceeds the roof at sampled base points (e.g. x={xs[bad][0]!r})"
            )
        return
    xs = fm.sys.sample_conditional(A.I, rng, spot_samples)
    v1 = A.h1.eval_array(xs)
    v2 = A.h2.eval_array(xs)
    tv = fm.tau.eval_array(xs)
    if (v1 < 0).any():
        raise SetValidationError("lower height is negative on the projection")
    if (v2 < v1).any():
        raise SetValidationError("upper height dips below the lower height")
    if (v2 > tv).any():
        raise SetValidationError("upper height exceeds the roof on the projection")
    if A.parallel_offset is not None:
        if np.abs((v2 - v1) - A.parallel_offset).max() > 1e-9:
            raise SetValidationError("declared parallel offset does not match h2 - h1")
    if A.width_sup is not None and (v2 - v1 > A.width_sup * (1 + 1e-12)).any():
        raise SetValidationError("observed fiber width exceeds the declared width bound")


def projection(A: FlowSet) -> BaseSet:
    return A.I


# ---------------------------------------------------------------------------
# Membership, escape, entry
# ---------------------------------------------------------------------------


def member(A: FlowSet, p: FlowPoint) -> bool:
    """Half-open membership for a canonical flow point."""
    if isinstance(A, CylinderSet):
        return A.I.contains(p.x) and A.t1 <= p.t < A.t2
    if not A.I.contains(p.x):
        return False
    return A.h1(p.x) <= p.t < A.h2(p.x)


def escape_time(A: FlowSet, p: FlowPoint) -> float:
    """Time to leave A through its upper boundary; zero off the set."""
    if not member(A, p):
        return 0.0
    if isinstance(A, CylinderSet):
        return A.t2 - p.t
    return A.h2(p.x) - p.t


def _entry_height(A: FlowSet, x) -> float:
    return A.t1 if isinstance(A, CylinderSet) else A.h1(x)


def _exit_height(A: FlowSet, x) -> float:
    return A.t2 if isinstance(A, CylinderSet) else A.h2(x)


def _positive_slice(A: FlowSet, x) -> bool:
    """Whether the fiber over x meets A in a set of positive length."""
    if isinstance(A, CylinderSet):
        return A.I.contains(x)
    return A.I.contains(x) and A.h1(x) < A.h2(x)


def target_mask(A: FlowSet) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized positive-slice membership of base points in the projection."""
    if isinstance(A, CylinderSet):
        return A.I.contains_array

    def mask(ys: np.ndarray) -> np.ndarray:
        m = A.I.contains_array(ys)
        if m.any():
            sub = ys[m]
            pos = A.h1.eval_array(sub) < A.h2.eval_array(sub)
            bad = np.flatnonzero(m)[~pos]
            m[bad] = False
        return m

    return mask


# ---------------------------------------------------------------------------
# Hitting and return times (base-return reduction)
# ---------------------------------------------------------------------------


def _hitting_parts(A: FlowSet, p: FlowPoint, fm: FlowMeasure, max_steps: int):
    """(escape, time-from-exit-to-reentry) for p in A; (0, hitting) outside."""
    x, t = p.x, p.t
    if member(A, p):
        esc = _exit_height(A, x) - t
        acc = CompensatedSum()
        y = x
        for _ in range(max_steps):
            acc.add(fm.tau.eval(y))
            y = fm.sys.apply(y)
            if _positive_slice(A, y):
                adjusted = (acc.value - _exit_height(A, x)) + _entry_height(A, y)
                return esc, adjusted
        raise NonRecurrentWithinBudget(
            f"orbit did not return to {A.describe()} within {max_steps} steps"
        )
    # Outside the set: first passage through the entry boundary.
    if _positive_slice(A, x) and t < _entry_height(A, x):
        return 0.0, _entry_height(A, x) - t
    acc = CompensatedSum()
    y = x
    for _ in range(max_steps):
        acc.add(fm.tau.eval(y))
        y = fm.sys.apply(y)
        if _positive_slice(A, y):
            return 0.0, (acc.value - t) + _entry_height(A, y)
    raise NonRecurrentWithinBudget(
        f"orbit did not reach {A.describe()} within {max_steps} steps"
    )


def hitting_time(
    A: FlowSet, p: FlowPoint, fm: FlowMeasure, max_steps: int = DEFAULT_MAX_STEPS
) -> float:
    """First time s (after escaping, for points inside) with the orbit in A."""
    _require_canonical(p, fm)
    esc, adj = _hitting_parts(A, p, fm, max_steps)
    return esc + adj


def adjusted_return_time(
    A: FlowSet, p: FlowPoint, fm: FlowMeasure, max_steps: int = DEFAULT_MAX_STEPS
) -> float:
    """Time from leaving A until re-entering it; requires p in A.

    hitting_time == escape_time + adjusted_return_time holds bit-exactly:
    hitting_time is assembled from these two parts.
    """
    _require_canonical(p, fm)
    if not member(A, p):
        raise ConfigurationError("adjusted return time is defined for points of the set")
    _, adj = _hitting_parts(A, p, fm, max_steps)
    return adj


def return_orbit_stats(
    fm: FlowMeasure,
    A: FlowSet,
    xs: np.ndarray,
    max_steps: int = DEFAULT_MAX_STEPS,
):
    """Vectorized base-return data for starting points on the projection.

    For each x: the first k >= 1 with f^k(x) back in the (positive-slice)
    projection, the compensated Birkhoff roof sum over those k steps, and
    f^k(x) itself. Lanes that exhaust the budget come back with ok=False.
    """
    mask = target_mask(A)
    n = len(xs)
    counts = np.zeros(n, dtype=np.int64)
    sums = np.zeros(n)
    ends = np.array(xs)
    ok = np.ones(n, dtype=bool)
    idx = np.arange(n)
    y = np.array(xs)
    hi = np.zeros(n)
    lo = np.zeros(n)
    k = 0
    while len(idx) and k < max_steps:
        k += 1
        v = fm.tau.eval_array(y)
        hi, lo = vector_add(hi, lo, v)
        y = fm.sys.apply_array(y)
        hit = mask(y)
        if hit.any():
            done = idx[hit]
            counts[done] = k
            sums[done] = hi[hit] + lo[hit]
            ends[done] = y[hit]
        keep = ~hit
        idx, y, hi, lo = idx[keep], y[keep], hi[keep], lo[keep]
    if len(idx):
        ok[idx] = False
    return counts, sums, ends, ok


# ---------------------------------------------------------------------------
# Exit regions and flow-set measure
# ---------------------------------------------------------------------------


def exit_region(A: CylinderSet, s: float) -> CylinderSet:
    """Points of the cylinder that leave it within flow time s: I x [t2-s, t2)."""
    if not isinstance(A, CylinderSet):
        raise ConfigurationError("exit regions are defined for cylinder sets")
    if not (0.0 < s <= A.width):
        raise InvalidExitWidth(f"exit width must lie in (0, {A.width:g}], got {s:g}")
    return CylinderSet(A.I, A.t2 - s, A.t2)


def _simpson(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int = 4097) -> float:
    """Composite Simpson integral of a smooth function over [a, b]."""
    if n % 2 == 0:
        n += 1
    xs = np.linspace(a, b, n)
    ys = np.asarray(fn(xs), dtype=float)
    h = (b - a) / (n - 1)
    return float(h / 3 * (ys[0] + ys[-1] + 4 * ys[1:-1:2].sum() + 2 * ys[2:-1:2].sum()))


def projection_integral(fm: FlowMeasure, I: BaseSet, fn: BaseFunction) -> float:
    """Integral of a height-like function over I against the base measure.

    Exact for constant and piecewise forms; deterministic quadrature for
    closed forms when the measure restricted to intervals is Lebesgue.
    """
    sys = fm.sys
    c = fn.constant_value
    if c is not None:
        return c * sys.measure(I)
    if sys.finite and isinstance(I, StateSet):
        states = np.asarray(I.states, dtype=np.int64)
        values = fn.eval_array(states)
        return math.fsum(float(sys.weights[s]) * v for s, v in zip(I.states, values))
    if isinstance(fn, PiecewiseConstant):
        return fn.integral_on(sys, I)
    intervals = (
        I.intervals
        if isinstance(I, IntervalUnion)
        else (I.interval,)
        if isinstance(I, DigitCylinder)
        else None
    )
    lebesgue = getattr(sys, "uniform", False) or sys.kind == "rotation"
    if intervals is not None and lebesgue:
        return math.fsum(_simpson(fn.eval_array, a, b) for a, b in intervals)
    raise UnsupportedExactIntegration(
        "no exact or quadrature route for this height on this system; "
        "use the Monte Carlo estimators"
    )


def bar_mu_of_set(fm: FlowMeasure, A: FlowSet) -> float:
    """Flow measure of a cylinder or graph set.

    Cylinder: mu(I) * (t2 - t1) / integral(tau). Graph: the width integral
    over the projection divided by integral(tau).
    """
    if isinstance(A, CylinderSet):
        return fm.sys.measure(A.I) * A.width / fm.normalizer
    if A.parallel_offset is not None:
        return A.parallel_offset * fm.sys.measure(A.I) / fm.normalizer
    width = _WidthFunction(A)
    return projection_integral(fm, A.I, width) / fm.normalizer


class _WidthFunction(BaseFunction):
    """h2 - h1 as a BaseFunction, so width integrals reuse the exact routes."""

    form = "width"

    def __init__(self, A: GraphSet):
        self.A = A

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        return self.A.width_array(xs)

    @property
    def constant_value(self) -> float | None:
        if self.A.parallel_offset is not None:
            return float(self.A.parallel_offset)
        c1, c2 = self.A.h1.constant_value, self.A.h2.constant_value
        if c1 is not None and c2 is not None:
            return c2 - c1
        return None

    def describe(self) -> str:
        return f"width({self.A.describe()})"
