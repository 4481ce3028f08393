"""Command-line experiment runner.

Subcommands:

* ``run --config PATH``: execute the configured quantities and write one
  report row per (set, quantity).
* ``list-systems``: print the system catalog with parameters and entropies.
* ``verify``: run the built-in invariant suites with a master seed.

Exit status: 0 on success, 1 when any estimate strays beyond four standard
errors of its analytic value or an exact identity fails, 2 for configuration
and validation errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import identities, oracle
from .config import ExperimentConfig, load_config
from .errors import IdentityCheckFailed, KacflowError
from .recurrence import CylinderSet, GraphSet, validate_flow_set
from .suspension import FlowMeasure
from .verify import run_verification

import numpy as np

RUN_COLUMNS = [
    "experiment_id",
    "system",
    "roof",
    "set",
    "quantity",
    "mc_estimate",
    "mc_stderr",
    "analytic_value",
    "z_score",
    "n_samples",
    "discarded",
    "seed",
    "workers",
    "wall_time_ms",
]

VERIFY_COLUMNS = ["suite", "check", "status", "observed", "expected", "criterion", "seed", "workers"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _write_rows(rows: list[dict], columns: list[str], fmt: str, out: str | None) -> None:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
        text = buf.getvalue()
    elif fmt == "json":
        payload = [{c: row.get(c) for c in columns} for row in rows]
        text = json.dumps(payload, indent=2, default=_fmt) + "\n"
    else:
        raise KacflowError(f"unknown report format {fmt!r}")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _report_row(report: identities.EstimateReport) -> dict:
    return {
        "quantity": report.quantity,
        "mc_estimate": report.mc_estimate,
        "mc_stderr": report.mc_stderr,
        "analytic_value": report.analytic_value,
        "z_score": report.z_score,
        "n_samples": report.n_samples,
        "discarded": report.discarded_samples,
        "_valid": report.valid,
    }


def _rational_model(cfg: ExperimentConfig) -> oracle.RationalFlowModel:
    sys_ = cfg.system
    if not sys_.finite:
        raise KacflowError("oracle_suite needs a finite permutation system")
    roofs = [Fraction(float(cfg.roof.eval(s))) for s in range(sys_.n_states)]
    return oracle.RationalFlowModel(sys_.table, roofs, sys_.weights)


def _rows_for_quantity(
    cfg: ExperimentConfig, fm: FlowMeasure, set_name: str, A, quantity: str
) -> list[dict]:
    N, seed, workers = cfg.samples, cfg.seed, cfg.workers
    if quantity == "mean_return":
        return [_report_row(identities.mc_mean_return(A, fm, N, seed, workers))]
    if quantity == "rhs_A":
        if not isinstance(A, CylinderSet):
            raise KacflowError(f"rhs_A needs a cylinder set, got {set_name!r}")
        value = identities.cylinder_mean_return_analytic(A, fm)
        return [{"quantity": "rhs_A", "analytic_value": value}]
    if quantity == "rhs_B":
        if not isinstance(A, GraphSet):
            raise KacflowError(f"rhs_B needs a graph set, got {set_name!r}")
        bd = identities.graph_mean_return_analytic(A, fm, N, seed, workers)
        if bd.exact:
            return [{"quantity": "rhs_B", "analytic_value": bd.total}]
        return [
            {
                "quantity": "rhs_B",
                "mc_estimate": bd.total,
                "mc_stderr": bd.stderr,
                "n_samples": bd.n_samples,
                "discarded": bd.discarded_samples,
            }
        ]
    if quantity == "cross_section":
        return [_report_row(identities.cross_section_mean_return(A.I, fm, N, seed, workers))]
    if quantity == "entropy_quotient":
        value = identities.entropy_quotient(A.I, fm)
        return [{"quantity": "entropy_quotient", "analytic_value": value}]
    if quantity == "helmberg":
        if not cfg.s_list:
            raise KacflowError("helmberg needs a nonempty s_list in [run]")
        if not isinstance(A, CylinderSet):
            raise KacflowError(f"helmberg needs a cylinder set, got {set_name!r}")
        reports = identities.exit_region_limit(A, fm, cfg.s_list, N, seed, workers)
        return [_report_row(r) for r in reports]
    if quantity == "stat1":
        if not isinstance(A, CylinderSet):
            raise KacflowError(f"stat1 needs a cylinder set, got {set_name!r}")
        return [_report_row(identities.check_unnormalized_identity(A, fm, N, seed, workers))]
    if quantity == "linearity":
        if not cfg.c_list:
            raise KacflowError("linearity needs a nonempty c_list in [run]")
        if not isinstance(A, CylinderSet):
            raise KacflowError(f"linearity needs a cylinder set, got {set_name!r}")
        result = identities.linearity_scan(A, fm, cfg.c_list)
        return [
            {
                "quantity": f"linearity[c={row.scale:g}]",
                "analytic_value": row.mean_return,
            }
            for row in result.rows
        ]
    if quantity == "oracle_suite":
        model = _rational_model(cfg)
        if not isinstance(A, CylinderSet):
            raise KacflowError(f"oracle_suite needs cylinder sets, got {set_name!r}")
        states = A.I.states
        suite = oracle.identity_suite(model, states, Fraction(A.t1), Fraction(A.t2))
        rows = []
        for check in suite.checks:
            rows.append(
                {
                    "quantity": f"oracle[{check.name}]",
                    "mc_estimate": float(check.lhs),
                    "analytic_value": float(check.rhs),
                    "z_score": 0.0 if check.holds else math.inf,
                }
            )
        return rows
    raise KacflowError(f"unknown quantity {quantity!r}")


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.samples is not None:
            cfg.samples = args.samples
        if args.workers is not None:
            cfg.workers = args.workers
        if args.out is not None:
            cfg.out = args.out
        if args.format is not None:
            cfg.format = args.format
        fm = _build_flow(cfg)
        for set_name, A in cfg.sets:
            validate_flow_set(A, fm, rng=np.random.default_rng([cfg.seed, 999]))
    except KacflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    rows: list[dict] = []
    failed = False
    try:
        for set_name, A in cfg.sets:
            for quantity in cfg.quantities:
                t0 = time.perf_counter()
                try:
                    q_rows = _rows_for_quantity(cfg, fm, set_name, A, quantity)
                except IdentityCheckFailed as exc:
                    print(f"identity failure [{set_name}/{quantity}]: {exc}", file=sys.stderr)
                    failed = True
                    continue
                wall_ms = int(round((time.perf_counter() - t0) * 1000))
                for row in q_rows:
                    valid = row.pop("_valid", True)
                    z = row.get("z_score")
                    if (z is not None and not math.isnan(z) and abs(z) > 4.0) or not valid:
                        failed = True
                    row.update(
                        experiment_id=cfg.experiment_id,
                        system=cfg.system.describe(),
                        roof=cfg.roof.describe(),
                        set=f"{set_name}:{A.describe()}",
                        seed=cfg.seed,
                        workers=cfg.workers,
                        wall_time_ms=wall_ms,
                    )
                    rows.append(row)
    except KacflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _write_rows(rows, RUN_COLUMNS, cfg.format, cfg.out)
    return 1 if failed else 0


def _build_flow(cfg: ExperimentConfig) -> FlowMeasure:
    if cfg.roof.integral == "mc":
        rng = np.random.default_rng([cfg.seed, 998])
        return FlowMeasure(cfg.system, cfg.roof, mc_samples=max(cfg.samples, 1), rng=rng)
    return FlowMeasure(cfg.system, cfg.roof)


# ---------------------------------------------------------------------------
# list-systems
# ---------------------------------------------------------------------------

_CATALOG_TEXT = """\
kind         parameters                                      entropy
expanding    m >= 2 branches, digit weights p_0..p_{m-1}     -sum p_i log p_i
             doubling map: m=2, p=(0.5, 0.5)                 log 2 = 0.6931471805599453
rotation     rotation number alpha in (0, 1)                 0
permutation  single n-cycle table, uniform rational weights  0

Sets: interval unions [a,b)+... (rotation, uniform expanding), digit
cylinders (expanding), state subsets (permutation). Roofs: constant,
piecewise constant, or a closed-form expression in x with a declared
lower bound and integral.
"""


def cmd_list_systems(_args) -> int:
    sys.stdout.write(_CATALOG_TEXT)
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.config is not None:
        try:
            cfg = load_config(args.config)
            fm = _build_flow(cfg)
            for _, A in cfg.sets:
                validate_flow_set(A, fm, rng=np.random.default_rng([args.seed, 999]))
        except KacflowError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    rows = run_verification(seed=args.seed, samples=args.samples, workers=args.workers)
    payload = [
        {
            "suite": r.suite,
            "check": r.check,
            "status": "pass" if r.passed else "fail",
            "observed": r.observed,
            "expected": r.expected,
            "criterion": r.criterion,
            "seed": args.seed,
            "workers": args.workers,
        }
        for r in rows
    ]
    _write_rows(payload, VERIFY_COLUMNS, args.format or "csv", args.out)
    return 0 if all(r.passed for r in rows) else 1


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kacflow",
        description="Suspension-flow return-time experiments: Monte Carlo vs analytic vs exact.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the quantities declared in a config file")
    p_run.add_argument("--config", required=True, help="TOML experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override [run].seed")
    p_run.add_argument("--samples", type=int, default=None, help="override [run].samples")
    p_run.add_argument("--workers", type=int, default=None, help="override [run].workers")
    p_run.add_argument("--out", default=None, help="report path (default: stdout)")
    p_run.add_argument("--format", choices=("csv", "json"), default=None)
    p_run.set_defaults(fn=cmd_run)

    p_list = sub.add_parser("list-systems", help="print the base-system catalog")
    p_list.set_defaults(fn=cmd_list_systems)

    p_verify = sub.add_parser("verify", help="run the built-in invariant suites")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--samples", type=int, default=200_000)
    p_verify.add_argument("--workers", type=int, default=1)
    p_verify.add_argument("--out", default=None, help="report path (default: stdout)")
    p_verify.add_argument("--format", choices=("csv", "json"), default=None)
    p_verify.add_argument(
        "--config", default=None, help="also validate this experiment config first"
    )
    p_verify.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
