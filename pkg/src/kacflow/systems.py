"""Base dynamical systems and their ergodic invariant measures.

Three catalog kinds, each bundling a map f on its state space with an
analytically known ergodic f-invariant probability measure:

* ``ExpandingMap``: x -> m*x mod 1 on [0,1) with the Bernoulli measure given
  by digit weights p_0..p_{m-1} (entropy -sum p_i log p_i).
* ``IrrationalRotation``: x -> x + alpha mod 1 with Lebesgue measure
  (entropy 0).
* ``FinitePermutation``: a cyclic permutation of {0..n-1} with the uniform
  (hence invariant) rational weights (entropy 0).

Measurable subsets of the base come in three matching representations
(interval unions, digit cylinders, state subsets) whose measures are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError, NonRecurrentWithinBudget, UnsupportedExactIntegration

DEFAULT_MAX_STEPS = 10**7

#: Digit depth for Bernoulli sampling: with m = 2 this exhausts the double
#: mantissa; other branch counts get the equivalent bit budget.
def _digit_depth(m: int) -> int:
    return 52 if m == 2 else math.ceil(52 / math.log2(m))


# ---------------------------------------------------------------------------
# Base sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalUnion:
    """Finite union of pairwise-disjoint half-open subintervals of [0,1)."""

    intervals: tuple[tuple[float, float], ...]

    def __init__(self, intervals: Sequence[Sequence[float]]):
        ivs = sorted((float(a), float(b)) for a, b in intervals)
        for a, b in ivs:
            if not (0.0 <= a < b <= 1.0):
                raise ConfigurationError(f"interval [{a}, {b}) not inside [0,1)")
        for (_, b0), (a1, _) in zip(ivs, ivs[1:]):
            if b0 > a1:
                raise ConfigurationError("intervals overlap")
        object.__setattr__(self, "intervals", tuple(ivs))

    def contains(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.intervals)

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        out = np.zeros(len(xs), dtype=bool)
        for a, b in self.intervals:
            out |= (xs >= a) & (xs < b)
        return out

    @property
    def length(self) -> float:
        return math.fsum(b - a for a, b in self.intervals)

    def describe(self) -> str:
        return "+".join(f"[{a:g},{b:g})" for a, b in self.intervals)


@dataclass(frozen=True)
class DigitCylinder:
    """All points of [0,1) whose first base-m digits match a fixed prefix."""

    base: int
    digits: tuple[int, ...]

    def __init__(self, base: int, digits: Sequence[int]):
        base = int(base)
        digits = tuple(int(d) for d in digits)
        if base < 2:
            raise ConfigurationError("digit cylinder needs base >= 2")
        if not digits:
            raise ConfigurationError("digit cylinder needs a nonempty prefix")
        if any(not 0 <= d < base for d in digits):
            raise ConfigurationError(f"digits {digits} out of range for base {base}")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "digits", digits)

    @property
    def interval(self) -> tuple[float, float]:
        """The cylinder as a half-open interval [a, a + base**-k)."""
        a = 0.0
        for i, d in enumerate(self.digits, start=1):
            a += d * self.base ** -i
        return a, a + self.base ** -len(self.digits)

    def contains(self, x: float) -> bool:
        a, b = self.interval
        return a <= x < b

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        a, b = self.interval
        return (xs >= a) & (xs < b)

    def describe(self) -> str:
        return "digits:" + "".join(str(d) for d in self.digits)


@dataclass(frozen=True)
class StateSet:
    """Finite subset of the states {0..n-1} of a finite system."""

    states: tuple[int, ...]

    def __init__(self, states):
        sts = tuple(sorted({int(s) for s in states}))
        if not sts:
            raise ConfigurationError("state set is empty")
        if any(s < 0 for s in sts):
            raise ConfigurationError("states must be nonnegative")
        object.__setattr__(self, "states", sts)

    def contains(self, x) -> bool:
        return int(x) in self.states

    def contains_array(self, xs: np.ndarray) -> np.ndarray:
        return np.isin(xs, np.asarray(self.states))

    def describe(self) -> str:
        return "states:" + ",".join(str(s) for s in self.states)


BaseSet = Union[IntervalUnion, DigitCylinder, StateSet]


def _as_intervals(A: BaseSet) -> tuple[tuple[float, float], ...] | None:
    if isinstance(A, IntervalUnion):
        return A.intervals
    if isinstance(A, DigitCylinder):
        return (A.interval,)
    return None


def intersects(A: BaseSet, B: BaseSet) -> bool:
    """Whether two base sets overlap (as half-open sets)."""
    if isinstance(A, StateSet) or isinstance(B, StateSet):
        if isinstance(A, StateSet) and isinstance(B, StateSet):
            return bool(set(A.states) & set(B.states))
        raise ConfigurationError("cannot intersect state sets with interval sets")
    for a0, b0 in _as_intervals(A):
        for a1, b1 in _as_intervals(B):
            if max(a0, a1) < min(b0, b1):
                return True
    return False


# ---------------------------------------------------------------------------
# Systems
# ---------------------------------------------------------------------------


class BaseSystem:
    """Common interface: the map, the invariant measure, and its metadata."""

    kind: str
    invertible: bool
    entropy: float
    finite: bool

    def apply(self, x):
        raise NotImplementedError

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def sample_conditional(self, I: BaseSet, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def measure(self, I: BaseSet) -> float:
        raise NotImplementedError

    def describe(self) -> str:
        raise NotImplementedError


class ExpandingMap(BaseSystem):
    """x -> m*x mod 1 with the Bernoulli measure of digit weights p_0..p_{m-1}."""

    kind = "expanding"
    invertible = False
    finite = False

    def __init__(self, branches: int, weights: Sequence[float] | None = None):
        m = int(branches)
        if m < 2:
            raise ConfigurationError("expanding map needs at least 2 branches")
        if weights is None:
            weights = [1.0 / m] * m
        w = [float(p) for p in weights]
        if len(w) != m:
            raise ConfigurationError(f"expected {m} digit weights, got {len(w)}")
        if any(p <= 0.0 for p in w):
            raise ConfigurationError("digit weights must be positive")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ConfigurationError("digit weights must sum to 1")
        self.branches = m
        self.weights = tuple(w)
        self.entropy = -math.fsum(p * math.log(p) for p in w)
        self.uniform = all(abs(p - 1.0 / m) <= 1e-15 for p in w)
        self._depth = _digit_depth(m)
        self._cumw = np.cumsum(w)[:-1]
        self._powers = np.array([float(m) ** -i for i in range(1, self._depth + 1)])

    def apply(self, x: float) -> float:
        return (self.branches * x) % 1.0

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return (self.branches * xs) % 1.0

    def _sample_digits(self, rng: np.random.Generator, n: int, depth: int) -> np.ndarray:
        u = rng.random((n, depth))
        if self.branches == 2:
            return (u >= self.weights[0]).astype(np.float64)
        return np.searchsorted(self._cumw, u.ravel(), side="right").reshape(n, depth).astype(np.float64)

    def _digits_to_points(self, digits: np.ndarray, powers: np.ndarray) -> np.ndarray:
        x = np.zeros(len(digits))
        for i in range(digits.shape[1]):
            x += digits[:, i] * powers[i]
        return x

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # Chunked: the digit matrix for large n would not fit comfortably.
        out = np.empty(n)
        block = max(1, 4_000_000 // self._depth)
        for lo in range(0, n, block):
            m = min(block, n - lo)
            digits = self._sample_digits(rng, m, self._depth)
            out[lo : lo + m] = self._digits_to_points(digits, self._powers)
        return out

    def sample_conditional(self, I: BaseSet, rng: np.random.Generator, n: int) -> np.ndarray:
        if isinstance(I, DigitCylinder):
            if I.base != self.branches:
                raise ConfigurationError("digit cylinder base does not match branch count")
            a, _ = I.interval
            k = len(I.digits)
            depth = max(self._depth - k, 1)
            scale = float(self.branches) ** -k
            powers = self._powers[:depth]
            out = np.empty(n)
            block = max(1, 4_000_000 // depth)
            for lo in range(0, n, block):
                m = min(block, n - lo)
                digits = self._sample_digits(rng, m, depth)
                out[lo : lo + m] = a + scale * self._digits_to_points(digits, powers)
            return out
        if isinstance(I, IntervalUnion):
            if not self.uniform:
                raise ConfigurationError(
                    "interval sets on a non-uniform expanding map have no exact measure; "
                    "use digit cylinders"
                )
            return _sample_interval_union(I, rng, n)
        raise ConfigurationError(f"{type(I).__name__} is not a valid set for an expanding map")

    def measure(self, I: BaseSet) -> float:
        if isinstance(I, DigitCylinder):
            if I.base != self.branches:
                raise ConfigurationError("digit cylinder base does not match branch count")
            return math.prod(self.weights[d] for d in I.digits)
        if isinstance(I, IntervalUnion):
            if not self.uniform:
                raise ConfigurationError(
                    "interval sets on a non-uniform expanding map have no exact measure; "
                    "use digit cylinders"
                )
            return I.length
        raise ConfigurationError(f"{type(I).__name__} is not a valid set for an expanding map")

    def describe(self) -> str:
        ws = ",".join(f"{p:g}" for p in self.weights)
        return f"expanding(m={self.branches};p={ws})"


class IrrationalRotation(BaseSystem):
    """x -> x + alpha mod 1 with Lebesgue measure.

    alpha is recorded verbatim; no irrationality certification is attempted
    (every double is rational), and recurrence statistics remain valid at the
    sample sizes this toolkit targets.
    """

    kind = "rotation"
    invertible = True
    finite = False
    entropy = 0.0

    def __init__(self, alpha: float):
        alpha = float(alpha)
        if not 0.0 < alpha < 1.0:
            raise ConfigurationError("rotation number must lie in (0,1)")
        self.alpha = alpha

    def apply(self, x: float) -> float:
        return (x + self.alpha) % 1.0

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return (xs + self.alpha) % 1.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.random(n)

    def sample_conditional(self, I: BaseSet, rng: np.random.Generator, n: int) -> np.ndarray:
        if isinstance(I, IntervalUnion):
            return _sample_interval_union(I, rng, n)
        raise ConfigurationError(f"{type(I).__name__} is not a valid set for a rotation")

    def measure(self, I: BaseSet) -> float:
        if isinstance(I, IntervalUnion):
            return I.length
        raise ConfigurationError(f"{type(I).__name__} is not a valid set for a rotation")

    def describe(self) -> str:
        return f"rotation(alpha={self.alpha!r})"


class FinitePermutation(BaseSystem):
    """A cyclic permutation of {0..n-1} with its invariant rational weights.

    Invariance forces the weights to be constant along cycles, and ergodicity
    (a single cycle, given that all weights are positive) then forces them to
    be uniform. Both constraints are checked at construction so that the
    discrete return-time identities hold exactly.
    """

    kind = "permutation"
    invertible = True
    finite = True
    entropy = 0.0

    def __init__(self, table: Sequence[int], weights: Sequence[Fraction | str | int] | None = None):
        table = tuple(int(t) for t in table)
        n = len(table)
        if n == 0 or sorted(table) != list(range(n)):
            raise ConfigurationError("table is not a permutation of 0..n-1")
        if weights is None:
            w = tuple(Fraction(1, n) for _ in range(n))
        else:
            w = tuple(Fraction(x) for x in weights)
        if len(w) != n:
            raise ConfigurationError(f"expected {n} state weights, got {len(w)}")
        if any(x <= 0 for x in w):
            raise ConfigurationError("state weights must be positive")
        if sum(w) != 1:
            raise ConfigurationError("state weights must sum to 1 exactly")
        for i in range(n):
            if w[table[i]] != w[i]:
                raise ConfigurationError(
                    "state weights are not invariant: weights must be constant on cycles"
                )
        # Ergodicity: with all weights positive this means a single n-cycle.
        seen, j = 1, table[0]
        while j != 0:
            seen += 1
            j = table[j]
        if seen != n:
            raise ConfigurationError(
                "permutation is not ergodic: the table must be a single cycle"
            )
        self.table = table
        self.weights = w
        self.n_states = n
        self._table_arr = np.asarray(table, dtype=np.int64)
        self._weights_float = np.asarray([float(x) for x in w])

    def apply(self, x: int) -> int:
        return self.table[int(x)]

    def apply_array(self, xs: np.ndarray) -> np.ndarray:
        return self._table_arr[xs]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(self.n_states, size=n, p=self._weights_float)

    def sample_conditional(self, I: BaseSet, rng: np.random.Generator, n: int) -> np.ndarray:
        if not isinstance(I, StateSet):
            raise ConfigurationError(f"{type(I).__name__} is not a valid set for a finite system")
        states = np.asarray(I.states)
        if states.max() >= self.n_states:
            raise ConfigurationError("state set references unknown states")
        p = self._weights_float[states]
        return states[rng.choice(len(states), size=n, p=p / p.sum())]

    def measure(self, I: BaseSet) -> float:
        return float(self.measure_exact(I))

    def measure_exact(self, I: BaseSet) -> Fraction:
        if not isinstance(I, StateSet):
            raise ConfigurationError(f"{type(I).__name__} is not a valid set for a finite system")
        if max(I.states) >= self.n_states:
            raise ConfigurationError("state set references unknown states")
        return sum((self.weights[s] for s in I.states), Fraction(0))

    def describe(self) -> str:
        return "permutation(" + ",".join(str(t) for t in self.table) + ")"


def _sample_interval_union(I: IntervalUnion, rng: np.random.Generator, n: int) -> np.ndarray:
    """Inverse-CDF sampling of the normalized Lebesgue measure on a union."""
    lengths = np.array([b - a for a, b in I.intervals])
    starts = np.array([a for a, _ in I.intervals])
    total = lengths.sum()
    u = rng.random(n) * total
    edges = np.concatenate(([0.0], np.cumsum(lengths)))
    idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, len(lengths) - 1)
    return starts[idx] + (u - edges[idx])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def apply_base(sys: BaseSystem, x):
    """One step of the base map."""
    return sys.apply(x)


def sample_mu(sys: BaseSystem, rng: np.random.Generator):
    """One point distributed per the invariant measure."""
    return sys.sample(rng, 1)[0]


def mu_of_set(sys: BaseSystem, I: BaseSet) -> float:
    """Exact invariant measure of a base set."""
    return sys.measure(I)


def first_return_base(sys: BaseSystem, I: BaseSet, x, max_steps: int = DEFAULT_MAX_STEPS) -> int:
    """Least k >= 1 with f^k(x) in I.

    Exceeding ``max_steps`` raises NonRecurrentWithinBudget: a diagnostic
    about the iteration budget, not a claim about the orbit.
    """
    y = x
    for k in range(1, max_steps + 1):
        y = sys.apply(y)
        if I.contains(y):
            return k
    raise NonRecurrentWithinBudget(f"no entry into {I.describe()} within {max_steps} steps")


def first_return_times(
    sys: BaseSystem, I: BaseSet, xs: np.ndarray, max_steps: int = DEFAULT_MAX_STEPS
):
    """Vectorized first entry times for an array of starting points.

    Returns ``(counts, ok)``: for lanes with ``ok`` False the budget ran out
    and ``counts`` is meaningless.
    """
    n = len(xs)
    counts = np.zeros(n, dtype=np.int64)
    ok = np.ones(n, dtype=bool)
    idx = np.arange(n)
    y = np.array(xs)
    k = 0
    while len(idx) and k < max_steps:
        k += 1
        y = sys.apply_array(y)
        hit = I.contains_array(y)
        counts[idx[hit]] = k
        idx, y = idx[~hit], y[~hit]
    if len(idx):
        ok[idx] = False
    return counts, ok


def integrate_mu(sys: BaseSystem, g, mode: str = "exact", N: int = 0, rng=None):
    """Integral of g against the invariant measure.

    ``g`` is either a list of ``(BaseSet, value)`` pieces forming a disjoint
    cover (exact mode) or a vectorized callable (Monte Carlo mode). Returns
    ``(value, stderr)``; exact integrals carry stderr 0.
    """
    if mode == "exact":
        if callable(g):
            raise UnsupportedExactIntegration(
                "exact integration needs a piecewise-constant declaration, got a callable"
            )
        pieces = list(g)
        masses = [sys.measure(part) for part, _ in pieces]
        if abs(math.fsum(masses) - 1.0) > 1e-12:
            raise ConfigurationError("piecewise partition does not cover the space")
        return math.fsum(m * float(v) for m, (_, v) in zip(masses, pieces)), 0.0
    if mode == "montecarlo":
        if not callable(g):
            raise ConfigurationError("Monte Carlo integration needs a callable integrand")
        if rng is None or N <= 0:
            raise ConfigurationError("Monte Carlo integration needs N > 0 and an rng")
        xs = sys.sample(rng, N)
        vals = np.asarray(g(xs), dtype=float)
        mean = float(vals.mean())
        stderr = float(vals.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
        return mean, stderr
    raise ConfigurationError(f"unknown integration mode {mode!r}")
