"""Exact rational ground truth on finite permutation base systems.

Every quantity the package estimates or evaluates in floating point has an
exact counterpart here, computed with ``fractions.Fraction`` throughout:
fiber integrals of hitting times are integrals of affine functions of t and
reduce to finite rational sums. These values anchor the unit tests and the
randomized identity suites.

Validity of the invariant measure (weights constant along cycles) and
ergodicity (a single cycle, given positive weights) are enforced at
construction; a silently non-invariant measure would poison every identity
downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import ConfigurationError, SetValidationError


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class RationalFlowModel:
    """A cyclic permutation with rational invariant weights and roof values."""

    perm: tuple[int, ...]
    weights: tuple[Fraction, ...]
    roofs: tuple[Fraction, ...]

    def __init__(self, perm: Sequence[int], roofs: Sequence, weights: Sequence | None = None):
        perm = tuple(int(i) for i in perm)
        n = len(perm)
        if n == 0 or sorted(perm) != list(range(n)):
            raise ConfigurationError("permutation table is not a bijection of 0..n-1")
        if weights is None:
            weights = [Fraction(1, n)] * n
        w = tuple(_frac(x) for x in weights)
        if len(w) != n or any(x <= 0 for x in w) or sum(w) != 1:
            raise ConfigurationError("weights must be positive rationals summing to 1")
        for i in range(n):
            if w[perm[i]] != w[i]:
                raise ConfigurationError(
                    "weights are not invariant under the permutation "
                    "(must be constant on cycles)"
                )
        seen, j = 1, perm[0]
        while j != 0:
            seen += 1
            j = perm[j]
        if seen != n:
            raise ConfigurationError("permutation is not ergodic: must be a single cycle")
        r = tuple(_frac(x) for x in roofs)
        if len(r) != n or any(x <= 0 for x in r):
            raise ConfigurationError("roof values must be positive rationals, one per state")
        object.__setattr__(self, "perm", perm)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "roofs", r)

    @property
    def n_states(self) -> int:
        return len(self.perm)

    @property
    def roof_integral(self) -> Fraction:
        return sum(w * r for w, r in zip(self.weights, self.roofs))

    def measure(self, I: Iterable[int]) -> Fraction:
        return sum((self.weights[s] for s in set(I)), Fraction(0))


def _check_states(model: RationalFlowModel, I: Iterable[int]) -> tuple[int, ...]:
    states = tuple(sorted(set(int(s) for s in I)))
    if not states:
        raise ConfigurationError("state set is empty")
    if states[-1] >= model.n_states or states[0] < 0:
        raise ConfigurationError("state set references unknown states")
    return states


def return_walk(model: RationalFlowModel, targets: Iterable[int], x: int):
    """(n, roof sum, endpoint) for the first k >= 1 with perm^k(x) in targets."""
    targets = set(targets)
    acc = Fraction(0)
    y = x
    for k in range(1, model.n_states + 1):
        acc += model.roofs[y]
        y = model.perm[y]
        if y in targets:
            return k, acc, y
    raise ConfigurationError("orbit does not meet the target states (not reachable)")


def discrete_kac(model: RationalFlowModel, I: Iterable[int]) -> Fraction:
    """Sum over I of n_I(x) * w_x; equal to 1 for every valid model."""
    states = _check_states(model, I)
    return sum(model.weights[x] * return_walk(model, states, x)[0] for x in states)


def _validate_cylinder(model: RationalFlowModel, states, t1: Fraction, t2: Fraction):
    if not (0 <= t1 < t2):
        raise SetValidationError("cylinder needs 0 <= t1 < t2")
    roof_min = min(model.roofs[s] for s in states)
    if t2 > roof_min:
        raise SetValidationError("t2 exceeds the roof minimum over the base states")


def mean_return(model: RationalFlowModel, I: Iterable[int], t1, t2) -> Fraction:
    """Exact mean hitting time over the normalized measure on I x [t1, t2).

    Per state the hitting time is affine in t, so each fiber integral is a
    closed rational expression; the mean is their weight-normalized sum.
    """
    states = _check_states(model, I)
    t1, t2 = _frac(t1), _frac(t2)
    _validate_cylinder(model, states, t1, t2)
    total = Fraction(0)
    for x in states:
        _, roof_sum, _ = return_walk(model, states, x)
        # average over t in [t1, t2) of roof_sum - t + t1
        total += model.weights[x] * (roof_sum - (t2 - t1) / 2)
    return total / model.measure(states)


def mean_return_analytic(model: RationalFlowModel, I: Iterable[int], t1, t2) -> Fraction:
    """The closed-form mean return value, in exact arithmetic.

    (t2-t1)/2 + (integral(tau) - (t2-t1) mu(I)) / mu(I): the same expression
    the floating-point evaluator uses, so the two routes must agree exactly.
    """
    states = _check_states(model, I)
    t1, t2 = _frac(t1), _frac(t2)
    _validate_cylinder(model, states, t1, t2)
    w = t2 - t1
    mu_I = model.measure(states)
    return w / 2 + (model.roof_integral - w * mu_I) / mu_I


def cross_section_mean(model: RationalFlowModel, I: Iterable[int]) -> Fraction:
    """Exact mean of the roof sum over one base return, averaged on I."""
    states = _check_states(model, I)
    total = sum(model.weights[x] * return_walk(model, states, x)[1] for x in states)
    return total / model.measure(states)


def graph_mean_return(model: RationalFlowModel, I: Iterable[int], h1, h2) -> Fraction:
    """Exact mean hitting time for a per-state-constant graph set.

    h1, h2 map states of I to rationals with 0 <= h1 <= h2 <= roof; states
    with empty fiber slices (h1 == h2) carry no mass and are not re-entry
    targets.
    """
    states = _check_states(model, I)
    lo = {s: _frac(h1[s]) for s in states}
    hi = {s: _frac(h2[s]) for s in states}
    for s in states:
        if not (0 <= lo[s] <= hi[s] <= model.roofs[s]):
            raise SetValidationError(f"heights out of range at state {s}")
    support = [s for s in states if lo[s] < hi[s]]
    if not support:
        raise SetValidationError("graph set has empty fibers everywhere")
    mass = Fraction(0)
    total = Fraction(0)
    for x in support:
        _, roof_sum, end = return_walk(model, support, x)
        width = hi[x] - lo[x]
        # average over t in [h1(x), h2(x)) of roof_sum - t + h1(end)
        fiber_mean = roof_sum + lo[end] - (lo[x] + hi[x]) / 2
        mass += model.weights[x] * width
        total += model.weights[x] * width * fiber_mean
    return total / mass


def graph_mean_return_terms(model: RationalFlowModel, I: Iterable[int], h1, h2):
    """The three-term decomposition (escape, roof-sum, entry-correction).

    Each term is the width-weighted average over the projection; their sum
    equals graph_mean_return exactly.
    """
    states = _check_states(model, I)
    lo = {s: _frac(h1[s]) for s in states}
    hi = {s: _frac(h2[s]) for s in states}
    support = [s for s in states if lo[s] < hi[s]]
    mass = Fraction(0)
    escape = Fraction(0)
    roof_term = Fraction(0)
    correction = Fraction(0)
    for x in support:
        _, roof_sum, end = return_walk(model, support, x)
        width = hi[x] - lo[x]
        wx = model.weights[x] * width
        mass += wx
        escape += wx * width / 2
        roof_term += wx * roof_sum
        correction += wx * (lo[end] - hi[x])
    return escape / mass, roof_term / mass, correction / mass


def exit_estimate(model: RationalFlowModel, I: Iterable[int], t1, t2, s) -> Fraction:
    """Exact value of (1/s) * integral of the hitting time over I x [t2-s, t2).

    Computed directly from per-fiber integrals; affine in s, with value
    1 - flow_measure(A) at s = 0.
    """
    states = _check_states(model, I)
    t1, t2, s = _frac(t1), _frac(t2), _frac(s)
    _validate_cylinder(model, states, t1, t2)
    if not (0 < s <= t2 - t1):
        raise SetValidationError("exit width out of range")
    total = Fraction(0)
    for x in states:
        _, roof_sum, _ = return_walk(model, states, x)
        # (1/s) * integral over [t2-s, t2) of (roof_sum - t + t1) dt
        total += model.weights[x] * (roof_sum + t1 - t2 + s / 2)
    return total / model.roof_integral


def exit_limit(model: RationalFlowModel, I: Iterable[int], t1, t2) -> Fraction:
    """The s -> 0 limit of exit_estimate, by exact linear extrapolation."""
    t1, t2 = _frac(t1), _frac(t2)
    s2 = (t2 - t1) / 4
    v1 = exit_estimate(model, I, t1, t2, 2 * s2)
    v2 = exit_estimate(model, I, t1, t2, s2)
    return 2 * v2 - v1


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    lhs: Fraction
    rhs: Fraction

    @property
    def holds(self) -> bool:
        return self.lhs == self.rhs


@dataclass(frozen=True)
class IdentitySuiteResult:
    checks: tuple[IdentityCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.holds]


def identity_suite(model: RationalFlowModel, I: Iterable[int], t1, t2) -> IdentitySuiteResult:
    """Every exact identity the cylinder A = I x [t1, t2) must satisfy."""
    states = _check_states(model, I)
    t1, t2 = _frac(t1), _frac(t2)
    _validate_cylinder(model, states, t1, t2)
    w = t2 - t1
    mu_I = model.measure(states)
    tau_int = model.roof_integral
    bar_mu = mu_I * w / tau_int
    mean = mean_return(model, I, t1, t2)
    roof_sums = {x: return_walk(model, states, x)[1] for x in states}
    checks = [
        IdentityCheck("kac_sum", discrete_kac(model, I), Fraction(1)),
        IdentityCheck(
            "return_sum_decomposition",
            sum(model.weights[x] * roof_sums[x] for x in states),
            tau_int,
        ),
        IdentityCheck(
            "unnormalized_identity",
            bar_mu * mean,
            bar_mu * w / 2 + w * (1 - bar_mu),
        ),
        IdentityCheck(
            "normalized_identity",
            mean,
            w / 2 + (1 - bar_mu) * tau_int / mu_I,
        ),
        IdentityCheck("closed_form", mean, mean_return_analytic(model, I, t1, t2)),
        IdentityCheck("cross_section", cross_section_mean(model, I), tau_int / mu_I),
        IdentityCheck("exit_limit", exit_limit(model, I, t1, t2), 1 - bar_mu),
    ]
    roof_values = {model.roofs[s] for s in range(model.n_states)}
    if len(roof_values) == 1 and t1 == 0 and t2 == next(iter(roof_values)):
        tau_c = next(iter(roof_values))
        checks.append(
            IdentityCheck("constant_roof_full_cylinder", mean, tau_c / mu_I * (1 - mu_I / 2))
        )
    return IdentitySuiteResult(tuple(checks))
