"""Command-line driver.

Subcommands: validate, solve, sweep, fit, certify, report.  Exit codes:
0 success, 1 certificate failure, 2 input error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import experiments, report
from .config import emit_config, parse_config
from .errors import (
    CertificateFailure,
    DomainError,
    GapFieldError,
    InputError,
    PreconditionError,
    ResourceError,
    SolverError,
    UnsupportedInputError,
)
from .geometry import validate as validate_geometry
from .solver import write_field

__all__ = ["run", "main"]


def _load_plan(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text), text


def _cmd_validate(args):
    plan, _ = _load_plan(args.config)
    failures = []
    for e in plan.epsilons:
        rep = validate_geometry(plan.geometry.at_epsilon(e))
        for c in rep.failures():
            failures.append((e, c))
    if failures:
        for e, c in failures:
            print(
                f"FAIL epsilon={e:g} {c.name}: {c.message} "
                f"(worst at r={c.worst_radius}, margin={c.margin})",
                file=sys.stderr,
            )
        raise InputError(f"{len(failures)} geometry check(s) failed")
    print(f"config ok: {len(plan.epsilons)} gap distances validate")
    print(emit_config(plan), end="")
    return 0


def _cmd_solve(args):
    plan, _ = _load_plan(args.config)
    eps = args.epsilon if args.epsilon is not None else plan.epsilons[0]
    geom = plan.geometry.at_epsilon(eps)
    rec = experiments.run_case(geom, plan.boundary, plan.policy, guard=not args.no_guard)
    rec.geometry_id = plan.geometry.label
    print(json.dumps(rec.to_dict(), indent=2, sort_keys=True))
    if args.dump:
        metrics, fld = experiments._solve_metrics(geom, plan.boundary, plan.policy)
        write_field(fld, args.dump)
        print(f"field dumped to {args.dump}", file=sys.stderr)
    return 0


def _run_sweep(plan):
    return experiments.sweep(
        plan.geometry, plan.boundary, plan.epsilons, plan.policy
    )


def _cmd_sweep(args):
    plan, plan_text = _load_plan(args.config)
    outdir = args.out or plan.output_dir
    os.makedirs(outdir, exist_ok=True)
    result = _run_sweep(plan)
    csv_path = os.path.join(outdir, "records.csv")
    json_path = os.path.join(outdir, "report.json")
    report.write_records(result.records, csv_path)
    report.write_report_json(
        json_path,
        plan_text=emit_config(plan),
        records=result.records,
        failures=result.failures,
    )
    print(f"wrote {csv_path} and {json_path} ({len(result.records)} records)")
    for e, msg in result.failures:
        print(f"warning: epsilon={e:g} failed: {msg}", file=sys.stderr)
    return 0


def _cmd_fit(args):
    records = report.read_records(args.records)
    if args.model == "power":
        fit = experiments.fit_power_law(records, args.metric)
    else:
        fit = experiments.fit_log_law(records, args.metric)
    print(json.dumps(fit.to_dict(), indent=2, sort_keys=True))
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            json.dump(fit.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _expected_bundle(plan):
    b = plan.boundary
    if b.kind == "dirichlet":
        return "bounded"
    if b.gap_value == 0.0:
        return "improved"
    return "blowup"


def _run_certificates(records, plan, expect):
    t = plan.thresholds
    certs = []
    if expect == "blowup":
        certs.append(
            experiments.lower_bound_certificate(
                records,
                plan.boundary.gap_value,
                osc_floor=t.osc_floor,
                grad_floor=t.grad_floor,
            )
        )
        certs.append(
            experiments.envelope_certificate(records, factor=t.envelope_factor)
        )
    elif expect == "bounded":
        certs.append(
            experiments.boundedness_certificate(
                records,
                factor=t.envelope_factor,
                exponent_max=t.dirichlet_exponent_max,
            )
        )
    elif expect == "improved":
        certs.append(
            experiments.improvement_certificate(
                records, exponent_max=t.improved_exponent_max
            )
        )
    else:
        raise InputError(f"unknown certificate bundle {expect!r}")
    return certs


def _cmd_certify(args):
    plan, _ = _load_plan(args.config)
    records = report.read_records(args.records)
    expect = args.expect if args.expect != "auto" else _expected_bundle(plan)
    certs = _run_certificates(records, plan, expect)
    for c in certs:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"{verdict} {c.name}: margin={c.margin:.4g} threshold={c.threshold:g}")
        print(json.dumps(c.details, indent=2, sort_keys=True, default=float))
    failed = [c for c in certs if not c.passed]
    if failed:
        names = ", ".join(c.name for c in failed)
        raise CertificateFailure(
            f"certificate(s) failed: {names} (bundle {expect!r})", results=certs
        )
    return 0


def _cmd_report(args):
    plan, plan_text = _load_plan(args.config)
    outdir = args.out or plan.output_dir
    os.makedirs(outdir, exist_ok=True)
    result = _run_sweep(plan)
    records = result.records

    fits = []
    try:
        fits.append(experiments.fit_power_law(records, "max_grad"))
    except InputError as exc:
        print(f"warning: power fit skipped: {exc}", file=sys.stderr)
    try:
        fits.append(experiments.fit_log_law(records, "osc_gap"))
    except InputError as exc:
        print(f"warning: log fit skipped: {exc}", file=sys.stderr)

    expect = _expected_bundle(plan)
    certs = _run_certificates(records, plan, expect)

    report.write_records(records, os.path.join(outdir, "records.csv"))
    report.write_report_json(
        os.path.join(outdir, "report.json"),
        plan_text=emit_config(plan),
        records=records,
        fits=fits,
        certificates=certs,
        failures=result.failures,
    )
    report.emit_plot_data(records, fits, outdir)

    for c in certs:
        verdict = "PASS" if c.passed else "FAIL"
        print(f"{verdict} {c.name}: margin={c.margin:.4g}")
    failed = [c for c in certs if not c.passed]
    if failed:
        names = ", ".join(c.name for c in failed)
        raise CertificateFailure(f"certificate(s) failed: {names}", results=certs)
    print(f"report written to {outdir}")
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gapfield",
        description="Simulator and verification harness for near-contact "
        "insulated inclusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config and its geometry")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("solve", help="solve one gap distance")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--dump", default=None, help="binary field dump path")
    p.add_argument("--no-guard", action="store_true", help="skip the coarse solve")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("sweep", help="run the gap-distance sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit", help="fit a scaling law to recorded metrics")
    p.add_argument("--records", required=True)
    p.add_argument("--metric", default="max_grad")
    p.add_argument("--model", choices=("power", "log"), default="power")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("certify", help="evaluate certificates on records")
    p.add_argument("--config", required=True)
    p.add_argument("--records", required=True)
    p.add_argument(
        "--expect", choices=("auto", "blowup", "bounded", "improved"), default="auto"
    )
    p.set_defaults(func=_cmd_certify)

    p = sub.add_parser("report", help="sweep, fit, certify, and write outputs")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except CertificateFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InputError, DomainError, UnsupportedInputError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GapFieldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(run(sys.argv[1:]))
