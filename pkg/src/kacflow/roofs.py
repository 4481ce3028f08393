"""Roof functions and, more generally, real-valued functions on the base.

A ``BaseFunction`` is one of three declared forms:

* constant,
* piecewise constant on finitely many base sets,
* a closed-form expression in x (vectorized via a restricted numpy namespace).

``RoofFunction`` wraps a positive BaseFunction with the extra contract a
suspension roof needs: a declared positive lower bound, an integral
declaration (exact, analytic, or explicitly Monte Carlo), and a supremum for
rejection sampling. Closed-form roofs must declare either an analytic
integral or opt into Monte Carlo integration; there is no silent fallback,
so the provenance of every analytic value stays clean.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    RoofBoundViolation,
    RoofSupViolation,
    UnsupportedExactIntegration,
)
from .summation import CompensatedSum
from .systems import BaseSet, BaseSystem, StateSet, intersects

_EXPR_NAMES = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "floor": np.floor,
    "ceil": np.ceil,
    "pi": np.pi,
    "e": np.e,
}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load,
    ast.Constant, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.Mod,
    ast.USub, ast.UAdd,
)


def compile_expression(expr: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in x into a vectorized callable."""
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {expr!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigurationError(
                f"expression {expr!r} uses unsupported syntax ({type(node).__name__})"
            )
        if isinstance(node, ast.Name) and node.id != "x" and node.id not in _EXPR_NAMES:
            raise ConfigurationError(f"unknown name {node.id!r} in expression {expr!r}")
        if isinstance(node, ast.Call) and (
            not isinstance(node.func, ast.Name) or node.func.id not in _EXPR_NAMES
        ):
            raise ConfigurationError(f"only {sorted(_EXPR_NAMES)} may be called in expressions")
    code = compile(tree, "<expression>", "eval")

    def fn(x):
        return eval(code, {"__builtins__": {}}, {**_EXPR_NAMES, "x": x})

    return fn


class BaseFunction:
    """A declared real-valued function on the base state space."""

    form: str

    def __call__(self, x) -> float:
        return float(self.eval_array(np.asarray([x]))[0])

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def constant_value(self) -> float | None:
        """The constant when the function is constant, else None."""
        return None

    def min_on(self, I: BaseSet) -> float | None:
        """Exact infimum over I when the form allows it, else None."""
        return None

    def max_value(self) -> float | None:
        """Exact global supremum when the form allows it, else None."""
        return None

    def exact_integral(self, sys: BaseSystem) -> float | None:
        """Exact integral against the invariant measure, when available."""
        return None

    def shifted(self, offset: float) -> "BaseFunction":
        return ShiftedFunction(self, float(offset))

    def scaled(self, factor: float) -> "BaseFunction":
        return ScaledFunction(self, float(factor))

    def describe(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantFunction(BaseFunction):
    value: float
    form = "constant"

    def __call__(self, x) -> float:
        return self.value

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        return np.full(len(xs), self.value)

    @property
    def constant_value(self) -> float:
        return self.value

    def min_on(self, I: BaseSet) -> float:
        return self.value

    def max_value(self) -> float:
        return self.value

    def exact_integral(self, sys: BaseSystem) -> float:
        return self.value

    def shifted(self, offset: float) -> "ConstantFunction":
        return ConstantFunction(self.value + float(offset))

    def scaled(self, factor: float) -> "ConstantFunction":
        return ConstantFunction(self.value * float(factor))

    def describe(self) -> str:
        return f"{self.value:g}"


class PiecewiseConstant(BaseFunction):
    """Constant values on finitely many pairwise-compatible base sets.

    The pieces need not cover the whole space (graph-set heights only need
    to be defined on their projection); evaluating at an uncovered point is
    an error.
    """

    form = "piecewise"

    def __init__(self, pieces: Sequence[tuple[BaseSet, float]]):
        if not pieces:
            raise ConfigurationError("piecewise function needs at least one piece")
        self.pieces = tuple((part, float(v)) for part, v in pieces)

    @classmethod
    def per_state(cls, values: Sequence[float]) -> "PiecewiseConstant":
        """One value per state of a finite system."""
        return cls([(StateSet([s]), v) for s, v in enumerate(values)])

    def __call__(self, x) -> float:
        for part, v in self.pieces:
            if part.contains(x):
                return v
        raise ConfigurationError("point outside the declared piecewise partition")

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        out = np.full(len(xs), np.nan)
        for part, v in self.pieces:
            out[part.contains_array(xs)] = v
        if np.isnan(out).any():
            raise ConfigurationError("point outside the declared piecewise partition")
        return out

    @property
    def constant_value(self) -> float | None:
        vals = {v for _, v in self.pieces}
        return vals.pop() if len(vals) == 1 else None

    def min_on(self, I: BaseSet) -> float:
        vals = [v for part, v in self.pieces if intersects(part, I)]
        if not vals:
            raise ConfigurationError("set does not meet the piecewise partition")
        return min(vals)

    def max_value(self) -> float:
        return max(v for _, v in self.pieces)

    def exact_integral(self, sys: BaseSystem) -> float:
        masses = [sys.measure(part) for part, _ in self.pieces]
        if abs(math.fsum(masses) - 1.0) > 1e-12:
            raise UnsupportedExactIntegration(
                "piecewise pieces do not cover the space; exact integral undefined"
            )
        return math.fsum(m * v for m, (_, v) in zip(masses, self.pieces))

    def integral_on(self, sys: BaseSystem, I: BaseSet | None = None) -> float:
        """Exact integral over I (the pieces restricted to I must tile I)."""
        if I is None:
            return self.exact_integral(sys)
        total = CompensatedSum()
        covered = CompensatedSum()
        for part, v in self.pieces:
            mass = _intersection_measure(sys, part, I)
            total.add(mass * v)
            covered.add(mass)
        if abs(covered.value - sys.measure(I)) > 1e-12:
            raise UnsupportedExactIntegration("pieces do not tile the integration set")
        return total.value

    def scaled(self, factor: float) -> "PiecewiseConstant":
        return PiecewiseConstant([(part, v * factor) for part, v in self.pieces])

    def describe(self) -> str:
        return "piecewise(" + ";".join(f"{p.describe()}={v:g}" for p, v in self.pieces) + ")"


class ExprFunction(BaseFunction):
    """Closed-form expression in x, evaluated through numpy."""

    form = "expression"

    def __init__(self, expr: str):
        self.expr = str(expr)
        self._fn = compile_expression(self.expr)

    def __call__(self, x) -> float:
        return float(self._fn(float(x)))

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        out = np.asarray(self._fn(xs), dtype=float)
        if out.shape != xs.shape:
            out = np.broadcast_to(out, xs.shape).copy()
        return out

    def describe(self) -> str:
        return self.expr


class ShiftedFunction(BaseFunction):
    """base(x) + offset; keeps parallel graph sides exact."""

    form = "shifted"

    def __init__(self, base: BaseFunction, offset: float):
        self.base = base
        self.offset = float(offset)

    def __call__(self, x) -> float:
        return self.base(x) + self.offset

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        return self.base.eval_array(xs) + self.offset

    @property
    def constant_value(self) -> float | None:
        c = self.base.constant_value
        return None if c is None else c + self.offset

    def min_on(self, I: BaseSet) -> float | None:
        m = self.base.min_on(I)
        return None if m is None else m + self.offset

    def max_value(self) -> float | None:
        m = self.base.max_value()
        return None if m is None else m + self.offset

    def exact_integral(self, sys: BaseSystem) -> float | None:
        v = self.base.exact_integral(sys)
        return None if v is None else v + self.offset

    def describe(self) -> str:
        return f"({self.base.describe()})+{self.offset:g}"


class ScaledFunction(BaseFunction):
    """factor * base(x); used by roof-family linearity scans."""

    form = "scaled"

    def __init__(self, base: BaseFunction, factor: float):
        self.base = base
        self.factor = float(factor)

    def __call__(self, x) -> float:
        return self.factor * self.base(x)

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        return self.factor * self.base.eval_array(xs)

    @property
    def constant_value(self) -> float | None:
        c = self.base.constant_value
        return None if c is None else self.factor * c

    def min_on(self, I: BaseSet) -> float | None:
        m = self.base.min_on(I)
        return None if m is None else self.factor * m

    def max_value(self) -> float | None:
        m = self.base.max_value()
        return None if m is None else self.factor * m

    def exact_integral(self, sys: BaseSystem) -> float | None:
        v = self.base.exact_integral(sys)
        return None if v is None else self.factor * v

    def describe(self) -> str:
        return f"{self.factor:g}*({self.base.describe()})"


def _exact_min(fn: BaseFunction) -> float | None:
    cv = fn.constant_value
    if cv is not None:
        return cv
    if isinstance(fn, PiecewiseConstant):
        return min(v for _, v in fn.pieces)
    if isinstance(fn, ScaledFunction):
        m = _exact_min(fn.base)
        return None if m is None else fn.factor * m
    if isinstance(fn, ShiftedFunction):
        m = _exact_min(fn.base)
        return None if m is None else m + fn.offset
    return None


def _has_exact_integral_form(fn: BaseFunction) -> bool:
    if isinstance(fn, (ConstantFunction, PiecewiseConstant)):
        return True
    if isinstance(fn, (ScaledFunction, ShiftedFunction)):
        return _has_exact_integral_form(fn.base)
    return False


def _intersection_measure(sys: BaseSystem, A: BaseSet, I: BaseSet) -> float:
    """Measure of A ∩ I for the representable combinations."""
    from .systems import DigitCylinder, IntervalUnion

    if isinstance(A, StateSet) and isinstance(I, StateSet):
        common = set(A.states) & set(I.states)
        return sys.measure(StateSet(common)) if common else 0.0
    if isinstance(A, DigitCylinder) and isinstance(I, DigitCylinder) and A.base == I.base:
        # One prefix must extend the other, otherwise the cylinders are disjoint.
        k = min(len(A.digits), len(I.digits))
        if A.digits[:k] != I.digits[:k]:
            return 0.0
        return sys.measure(A if len(A.digits) >= len(I.digits) else I)
    a_ivs = A.intervals if isinstance(A, IntervalUnion) else (A.interval,) if isinstance(A, DigitCylinder) else None
    i_ivs = I.intervals if isinstance(I, IntervalUnion) else (I.interval,) if isinstance(I, DigitCylinder) else None
    if a_ivs is None or i_ivs is None:
        raise ConfigurationError("cannot intersect incompatible set representations")
    pieces = []
    for a0, b0 in a_ivs:
        for a1, b1 in i_ivs:
            lo, hi = max(a0, a1), min(b0, b1)
            if lo < hi:
                pieces.append((lo, hi))
    if not pieces:
        return 0.0
    return sys.measure(IntervalUnion(pieces))


# ---------------------------------------------------------------------------
# Roofs
# ---------------------------------------------------------------------------

MC_INTEGRAL = "mc"


class RoofFunction:
    """A base function bounded away from zero, with its integral contract.

    ``integral``: a float declares the analytic value of the integral against
    the invariant measure; ``"mc"`` opts into Monte Carlo estimation; None is
    allowed only for constant/piecewise forms, whose integrals are exact.

    ``sup``: declared supremum, required for closed-form roofs that feed the
    flow-measure rejection sampler.
    """

    def __init__(
        self,
        fn: BaseFunction,
        lower_bound: float | None = None,
        integral=None,
        sup: float | None = None,
    ):
        self.fn = fn
        exact_min = _exact_min(fn)
        if lower_bound is None:
            if exact_min is None:
                raise ConfigurationError("closed-form roofs must declare a positive lower bound")
            lower_bound = exact_min
        self.lower_bound = float(lower_bound)
        if self.lower_bound <= 0.0:
            raise RoofBoundViolation(f"roof lower bound must be positive, got {self.lower_bound}")
        if exact_min is not None and exact_min < self.lower_bound:
            raise RoofBoundViolation(
                f"declared lower bound {self.lower_bound} exceeds the actual minimum {exact_min}"
            )
        if integral is None and not _has_exact_integral_form(fn):
            raise ConfigurationError(
                "closed-form roofs must declare an analytic integral or opt into 'mc'"
            )
        if integral is not None and integral != MC_INTEGRAL:
            integral = float(integral)
        self.integral = integral
        declared_sup = fn.max_value() if sup is None else float(sup)
        self.sup = declared_sup
        if self.sup is not None and self.sup < self.lower_bound:
            raise ConfigurationError("declared roof sup lies below the lower bound")

    def eval(self, x) -> float:
        v = self.fn(x)
        if v < self.lower_bound:
            raise RoofBoundViolation(
                f"roof value {v} at x={x} below declared lower bound {self.lower_bound}"
            )
        if self.sup is not None and v > self.sup * (1 + 1e-12):
            raise RoofSupViolation(
                f"roof value {v} at x={x} above declared supremum {self.sup}"
            )
        return v

    def eval_array(self, xs: np.ndarray) -> np.ndarray:
        vs = self.fn.eval_array(xs)
        if len(vs):
            if vs.min() < self.lower_bound:
                bad = xs[int(np.argmin(vs))]
                raise RoofBoundViolation(
                    f"roof value {vs.min()} at x={bad} below declared lower bound {self.lower_bound}"
                )
            if self.sup is not None and vs.max() > self.sup * (1 + 1e-12):
                bad = xs[int(np.argmax(vs))]
                raise RoofSupViolation(
                    f"roof value {vs.max()} at x={bad} above declared supremum {self.sup}"
                )
        return vs

    @property
    def constant_value(self) -> float | None:
        return self.fn.constant_value

    def min_on(self, I: BaseSet) -> float | None:
        return self.fn.min_on(I)

    def scaled(self, factor: float) -> "RoofFunction":
        """The roof c*tau, scaling bounds and any declared integral."""
        factor = float(factor)
        if factor <= 0.0:
            raise ConfigurationError("roof scale factor must be positive")
        integral = self.integral
        if isinstance(integral, float):
            integral = integral * factor
        return RoofFunction(
            self.fn.scaled(factor),
            lower_bound=self.lower_bound * factor,
            integral=integral,
            sup=None if self.sup is None else self.sup * factor,
        )

    def describe(self) -> str:
        return self.fn.describe()


def eval_roof(tau: RoofFunction, x) -> float:
    """Roof height at x; raises RoofBoundViolation below the declared bound."""
    return tau.eval(x)


def roof_integral(
    tau: RoofFunction, sys: BaseSystem, mode: str = "auto", N: int = 0, rng=None
):
    """Integral of the roof against the invariant measure, as (value, stderr).

    Exact for constant and piecewise roofs, the declared value for analytic
    closed forms; closed forms that declared 'mc' require explicit Monte
    Carlo parameters (never a silent fallback).
    """
    if isinstance(tau.integral, float):
        return tau.integral, 0.0
    exact = tau.fn.exact_integral(sys)
    if exact is not None:
        return exact, 0.0
    if tau.integral == MC_INTEGRAL:
        if mode not in ("auto", "montecarlo") or rng is None or N <= 0:
            raise UnsupportedExactIntegration(
                "roof declared Monte Carlo integration; pass N and an rng"
            )
        from .systems import integrate_mu

        return integrate_mu(sys, tau.eval_array, mode="montecarlo", N=N, rng=rng)
    raise UnsupportedExactIntegration("roof has no integral declaration")


def birkhoff_roof_sum(tau: RoofFunction, sys: BaseSystem, x, n: int) -> float:
    """Compensated sum tau(x) + tau(f x) + ... + tau(f^{n-1} x); 0 for n = 0."""
    if n < 0:
        raise ConfigurationError("Birkhoff sum length must be nonnegative")
    acc = CompensatedSum()
    y = x
    for _ in range(n):
        acc.add(tau.eval(y))
        y = sys.apply(y)
    return acc.value
