"""Experiment configuration: TOML parsing and object construction.

A config file declares one system, one roof, a list of flow sets, and a
[run] table with the quantities to compute. The grammar is documented in
the README; everything is validated before any sampling starts, and every
validation error names the constraint it violates.
"""

from __future__ import annotations

import hashlib
import sys as _sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError
from .recurrence import CylinderSet, FlowSet, GraphSet
from .roofs import (
    BaseFunction,
    ConstantFunction,
    ExprFunction,
    PiecewiseConstant,
    RoofFunction,
)
from .systems import (
    BaseSet,
    BaseSystem,
    DigitCylinder,
    ExpandingMap,
    FinitePermutation,
    IntervalUnion,
    IrrationalRotation,
    StateSet,
)

QUANTITIES = (
    "mean_return",
    "rhs_A",
    "rhs_B",
    "cross_section",
    "entropy_quotient",
    "helmberg",
    "stat1",
    "linearity",
    "oracle_suite",
)


@dataclass
class ExperimentConfig:
    experiment_id: str
    system: BaseSystem
    roof: RoofFunction
    sets: list[tuple[str, FlowSet]]
    quantities: list[str]
    samples: int = 100_000
    seed: int = 0
    workers: int = 1
    s_list: list[float] = field(default_factory=list)
    c_list: list[float] = field(default_factory=list)
    out: str | None = None
    format: str = "csv"


def _require(table: dict, key: str, context: str):
    if key not in table:
        raise ConfigurationError(f"{context}: missing required key {key!r}")
    return table[key]


def build_system(spec: dict) -> BaseSystem:
    kind = _require(spec, "kind", "[system]")
    if kind == "expanding":
        return ExpandingMap(_require(spec, "branches", "[system]"), spec.get("weights"))
    if kind == "rotation":
        return IrrationalRotation(_require(spec, "alpha", "[system]"))
    if kind == "permutation":
        weights = spec.get("state_weights")
        if weights is not None:
            weights = [Fraction(w) for w in weights]
        return FinitePermutation(_require(spec, "table", "[system]"), weights)
    raise ConfigurationError(f"[system]: unknown kind {kind!r}")


def build_base_set(spec: dict, system: BaseSystem) -> BaseSet:
    kind = _require(spec, "kind", "base set")
    if kind == "intervals":
        return IntervalUnion(_require(spec, "intervals", "base set"))
    if kind == "digits":
        branches = getattr(system, "branches", None)
        if branches is None:
            raise ConfigurationError("digit-cylinder sets need an expanding system")
        return DigitCylinder(branches, _require(spec, "digits", "base set"))
    if kind == "states":
        return StateSet(_require(spec, "states", "base set"))
    raise ConfigurationError(f"base set: unknown kind {kind!r}")


def _build_function(spec, system: BaseSystem, context: str) -> BaseFunction:
    if isinstance(spec, (int, float)):
        return ConstantFunction(float(spec))
    if isinstance(spec, str):
        return ExprFunction(spec)
    if isinstance(spec, list):
        if not system.finite:
            raise ConfigurationError(f"{context}: per-state values need a finite system")
        return PiecewiseConstant.per_state([float(v) for v in spec])
    if isinstance(spec, dict) and "pieces" in spec:
        pieces = [
            (build_base_set(_require(p, "set", context), system), float(_require(p, "value", context)))
            for p in spec["pieces"]
        ]
        return PiecewiseConstant(pieces)
    raise ConfigurationError(f"{context}: cannot interpret {spec!r} as a function")


def build_roof(spec: dict, system: BaseSystem) -> RoofFunction:
    form = _require(spec, "form", "[roof]")
    integral = spec.get("integral")
    if form == "constant":
        fn: BaseFunction = ConstantFunction(float(_require(spec, "value", "[roof]")))
    elif form == "piecewise":
        if "values" in spec:
            fn = _build_function(list(spec["values"]), system, "[roof]")
        else:
            fn = _build_function({"pieces": _require(spec, "pieces", "[roof]")}, system, "[roof]")
    elif form == "expression":
        fn = ExprFunction(_require(spec, "expr", "[roof]"))
        if "lower_bound" not in spec:
            raise ConfigurationError("[roof]: closed-form roofs must declare lower_bound")
        if integral is None:
            raise ConfigurationError(
                "[roof]: closed-form roofs must declare integral = <analytic value> or 'mc'"
            )
    else:
        raise ConfigurationError(f"[roof]: unknown form {form!r}")
    return RoofFunction(
        fn,
        lower_bound=spec.get("lower_bound"),
        integral=integral,
        sup=spec.get("sup"),
    )


def build_flow_set(spec: dict, system: BaseSystem) -> tuple[str, FlowSet]:
    name = spec.get("name", "set")
    kind = _require(spec, "kind", f"set {name!r}")
    base = build_base_set(_require(spec, "base", f"set {name!r}"), system)
    if kind == "cylinder":
        return name, CylinderSet(
            base,
            float(_require(spec, "t1", f"set {name!r}")),
            float(_require(spec, "t2", f"set {name!r}")),
        )
    if kind == "graph":
        h1 = _build_function(_require(spec, "h1", f"set {name!r}"), system, f"set {name!r}")
        offset = spec.get("parallel_offset")
        if "h2" in spec:
            h2 = _build_function(spec["h2"], system, f"set {name!r}")
        elif offset is not None:
            h2 = h1.shifted(float(offset))
        else:
            raise ConfigurationError(f"set {name!r}: graph sets need h2 or parallel_offset")
        return name, GraphSet(
            base,
            h1,
            h2,
            parallel_offset=None if offset is None else float(offset),
            width_sup=spec.get("width_sup"),
        )
    raise ConfigurationError(f"set {name!r}: unknown kind {kind!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        # tomli error messages carry "at line L, column C"
        raise ConfigurationError(f"{path}: malformed config: {exc}") from exc

    system = build_system(_require(data, "system", str(path)))
    roof = build_roof(_require(data, "roof", str(path)), system)
    sets = [build_flow_set(s, system) for s in data.get("sets", [])]
    run = data.get("run", {})
    quantities = list(run.get("quantities", []))
    for q in quantities:
        if q not in QUANTITIES:
            raise ConfigurationError(
                f"[run]: unknown quantity {q!r}; expected one of {', '.join(QUANTITIES)}"
            )
    experiment_id = data.get("name") or hashlib.sha256(raw).hexdigest()[:12]
    return ExperimentConfig(
        experiment_id=str(experiment_id),
        system=system,
        roof=roof,
        sets=sets,
        quantities=quantities,
        samples=int(run.get("samples", 100_000)),
        seed=int(run.get("seed", 0)),
        workers=int(run.get("workers", 1)),
        s_list=[float(s) for s in run.get("s_list", [])],
        c_list=[float(c) for c in run.get("c_list", [])],
        out=run.get("out"),
        format=str(run.get("format", "csv")),
    )
