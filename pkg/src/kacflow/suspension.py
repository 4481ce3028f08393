"""The suspension flow kernel.

Points live in canonical coordinates (x, t) with 0 <= t < tau(x); the top of
each fiber is identified downward, (x, tau(x)) ~ (f(x), 0), so membership and
escape times are deterministic. Flowing for time s crosses

    k = max{ j >= 0 : tau(x) + ... + tau(f^{j-1} x) <= t + s }

fibers and lands at (f^k(x), t + s - tau^k(x)). All cumulative roof sums are
compensated, and a budget landing exactly on a fiber boundary resolves upward
into the next fiber (t' = 0).

The flow-invariant probability measure is the normalized product
(mu x Lebesgue) / integral(tau); its sampler draws x from mu, accepts with
probability tau(x)/tau_sup, and then places t uniformly on [0, tau(x)).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadSupBoundWarning, ConfigurationError
from .roofs import RoofFunction, roof_integral
from .summation import CompensatedSum, vector_add, vector_residual
from .systems import BaseSystem

#: Proposals to observe before judging the rejection acceptance rate.
_ACCEPTANCE_WINDOW = 100_000
_MIN_ACCEPTANCE = 1e-3


@dataclass(frozen=True)
class FlowPoint:
    """Canonical point of the suspension space: 0 <= t < tau(x)."""

    x: object
    t: float


class FlowMeasure:
    """A base system, a roof, and the normalized flow-invariant measure.

    ``normalizer`` is the roof integral; for roofs that declared Monte Carlo
    integration it is estimated once at construction (pass ``mc_samples`` and
    ``rng``) and carries ``normalizer_stderr``.
    """

    def __init__(
        self,
        sys: BaseSystem,
        tau: RoofFunction,
        mc_samples: int = 0,
        rng: np.random.Generator | None = None,
    ):
        self.sys = sys
        self.tau = tau
        self.normalizer, self.normalizer_stderr = roof_integral(
            tau, sys, mode="auto" if mc_samples else "exact", N=mc_samples, rng=rng
        )
        if self.normalizer <= 0.0:
            raise ConfigurationError("roof integral must be positive")
        self.tau_sup = tau.sup

    def describe(self) -> str:
        return f"{self.sys.describe()}/roof={self.tau.describe()}"


def _advance(sys: BaseSystem, tau: RoofFunction, x, budget: float):
    """Walk fibers until the remaining budget fits inside the current one.

    Returns (y, k, remainder): y = f^k(x), tau^k(x) <= budget < tau^{k+1}(x),
    remainder = budget - tau^k(x) computed against the compensated sum.
    """
    acc = CompensatedSum()
    y, k = x, 0
    while True:
        v = tau.eval(y)
        rem = acc.residual_from(budget)
        if v > rem:
            return y, k, max(rem, 0.0)
        acc.add(v)
        y = sys.apply(y)
        k += 1


def canonicalize(x, t: float, tau: RoofFunction, sys: BaseSystem) -> FlowPoint:
    """Resolve (x, t) with arbitrary t >= 0 into canonical coordinates."""
    if t < 0:
        raise ConfigurationError("fiber time must be nonnegative")
    y, _, rem = _advance(sys, tau, x, t)
    return FlowPoint(y, rem)


def _require_canonical(p: FlowPoint, fm: FlowMeasure) -> None:
    if p.t < 0 or p.t >= fm.tau.eval(p.x):
        raise ConfigurationError(f"flow point (x={p.x}, t={p.t}) is not canonical")


def evolve(p: FlowPoint, s: float, fm: FlowMeasure) -> FlowPoint:
    """Flow a canonical point forward by time s >= 0."""
    if s < 0:
        raise ConfigurationError("backward evolution is not supported")
    _require_canonical(p, fm)
    y, _, rem = _advance(fm.sys, fm.tau, p.x, p.t + s)
    return FlowPoint(y, rem)


def crossing_count(p: FlowPoint, s: float, fm: FlowMeasure) -> int:
    """Number of fiber crossings when flowing p forward by s."""
    if s < 0:
        raise ConfigurationError("backward evolution is not supported")
    _require_canonical(p, fm)
    _, k, _ = _advance(fm.sys, fm.tau, p.x, p.t + s)
    return k


def evolve_array(fm: FlowMeasure, xs: np.ndarray, ts: np.ndarray, s: float):
    """Vectorized evolve for arrays of canonical points, one lane per point."""
    n = len(xs)
    out_x = np.array(xs)
    out_t = np.empty(n)
    idx = np.arange(n)
    y = np.array(xs)
    budget = ts + s
    hi = np.zeros(n)
    lo = np.zeros(n)
    while len(idx):
        v = fm.tau.eval_array(y)
        rem = vector_residual(hi, lo, budget)
        done = v > rem
        if done.any():
            out_x[idx[done]] = y[done]
            out_t[idx[done]] = np.maximum(rem[done], 0.0)
        keep = ~done
        idx, y, budget, hi, lo = idx[keep], y[keep], budget[keep], hi[keep], lo[keep]
        if len(idx):
            hi, lo = vector_add(hi, lo, v[keep])
            y = fm.sys.apply_array(y)
    return out_x, out_t


def sample_flow_points(fm: FlowMeasure, rng: np.random.Generator, n: int):
    """Draw n points from the flow measure; returns (xs, ts).

    Rejection against the declared roof supremum. Any observed roof value
    above the supremum aborts; a persistently tiny acceptance rate only warns
    (the sampler stays correct, just slow).
    """
    if fm.tau_sup is None:
        raise ConfigurationError("sampling the flow measure needs a declared roof supremum")
    sup = float(fm.tau_sup)
    xs = np.empty(n, dtype=np.int64 if fm.sys.finite else np.float64)
    taus = np.empty(n)
    got = 0
    proposals = 0
    accepted = 0
    warned = False
    while got < n:
        batch = max(n - got, 4096)
        cand = fm.sys.sample(rng, batch)
        tv = fm.tau.eval_array(cand)  # raises RoofSupViolation above the declared sup
        acc = rng.random(batch) * sup < tv
        k = min(int(acc.sum()), n - got)
        sel = np.flatnonzero(acc)[:k]
        xs[got : got + k] = cand[sel]
        taus[got : got + k] = tv[sel]
        got += k
        proposals += batch
        accepted += int(acc.sum())
        if not warned and proposals >= _ACCEPTANCE_WINDOW and accepted < _MIN_ACCEPTANCE * proposals:
            warnings.warn(
                f"flow-measure acceptance rate {accepted / proposals:.2e}; "
                "declared roof supremum looks far too large",
                BadSupBoundWarning,
            )
            warned = True
    ts = rng.random(n) * taus
    return xs, ts


def sample_bar_mu(fm: FlowMeasure, rng: np.random.Generator) -> FlowPoint:
    """One flow-measure-distributed point."""
    xs, ts = sample_flow_points(fm, rng, 1)
    x = xs[0]
    if fm.sys.finite:
        x = int(x)
    return FlowPoint(x, float(ts[0]))
