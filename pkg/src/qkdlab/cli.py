"""Command-line front end.

Four subcommands: `simulate` runs the protocol and summarizes the record,
`certify` additionally evaluates every security bound, `sweep` repeats
certification over a grid of one parameter, and `compose` totals a budget
tree.  Reports are emitted as canonical JSON (sorted keys, floats rounded
to 12 significant digits) or CSV, so identical inputs give byte-identical
outputs; --threads only parallelizes independent sweep points and never
changes the bytes.

Exit codes: 0 all evaluated bounds hold, 1 a certified bound row failed,
2 bad input or configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, bounds, compose as compose_mod, gridscan
from .qkdsim import QkdRunRecord, run_protocol
from .qmatrix import CapacityError
from .scenario import SWEEP_PARAMS, Scenario, ScenarioError, apply_sweep_value, load_scenario

SWEEP_COLUMNS = ("value", "eps_composable", "eps_privacy", "b1_rhs", "b2_rhs", "hol_rhs", "fid_rhs")


def _round_floats(obj):
    """Canonicalize floats to 12 significant digits, recursively."""
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return None
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def render_json(report: dict) -> str:
    return json.dumps(_round_floats(report), sort_keys=True, indent=2) + "\n"


def _flatten(obj, prefix: str = "") -> list[tuple[str, object]]:
    if isinstance(obj, dict):
        out = []
        for k in sorted(obj):
            out.extend(_flatten(obj[k], f"{prefix}{k}."))
        return out
    if isinstance(obj, list):
        out = []
        for i, v in enumerate(obj):
            out.extend(_flatten(v, f"{prefix}{i}."))
        return out
    return [(prefix[:-1], obj)]


def render_csv(report: dict) -> str:
    lines = ["key,value"]
    for key, value in _flatten(_round_floats(report)):
        if value is None:
            value = ""
        lines.append(f"{key},{value}")
    return "\n".join(lines) + "\n"


def _versions() -> dict:
    return {
        "qkdlab": __version__,
        "python": ".".join(str(v) for v in sys.version_info[:3]),
        "numpy": np.__version__,
        "grid_backend": gridscan.backend_name(),
    }


def _record_summary(record: QkdRunRecord) -> dict:
    pass_prob = 1.0 - record.length_dist.get(0, 0.0)
    match = sum(w for (ka, kb), w in record.key_table.items() if ka and ka == kb)
    return {
        "length_dist": {str(m): w for m, w in sorted(record.length_dist.items())},
        "pass_probability": pass_prob,
        "key_match_probability": (match / pass_prob) if pass_prob > 0.0 else None,
        "qber_expected": record.qber.expected_rate,
        "qber_std_error": record.qber.std_error,
        "qber_tested_weight": record.qber.tested_weight,
        "cells": len(record.key_table),
        "mode": record.config.mode,
    }


def _security_dict(report: bounds.SecurityReport) -> dict:
    return {
        "mu1": report.mu1,
        "mu2_chi": report.mu2_chi,
        "mu2_fid": report.mu2_fid,
        "mu2_acc": report.mu2_acc,
        "eps_composable": report.eps_composable,
        "eps_privacy": report.eps_privacy,
        "keywise_privacy": report.keywise_privacy,
        "triangle": list(report.triangle),
        "max_len": report.max_len,
        "passed": report.passed,
        "rows": [
            {
                "name": r.name,
                "lhs": r.lhs,
                "rhs": r.rhs,
                "passed": r.passed,
                "informational": r.informational,
            }
            for r in report.rows
        ],
    }


def _compose_dict(tree: compose_mod.CompositionTree) -> dict:
    return {
        "total": compose_mod.tree_total(tree),
        "nodes": [
            {"id": n.node_id, "name": n.name, "eps": n.eps, "parent": n.parent}
            for n in tree.nodes
        ],
    }


def _report_skeleton(scenario: Scenario) -> dict:
    return {
        "scenario": scenario.raw,
        "record_summary": None,
        "security_report": None,
        "compose_budget": None,
        "versions": _versions(),
    }


def _emit(args, scenario: Scenario, report: dict) -> None:
    fmt = args.format or scenario.output.format
    text = render_csv(report) if fmt == "csv" else render_json(report)
    path = args.out or scenario.output.path
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _need(scenario: Scenario, what: str, command: str):
    value = getattr(scenario, what)
    if value is None:
        raise ScenarioError(f"the {command} command needs a {what!r} block in the scenario")
    return value


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    record = run_protocol(_need(scenario, "protocol", "simulate"), _need(scenario, "eve", "simulate"))
    report = _report_skeleton(scenario)
    report["record_summary"] = _record_summary(record)
    _emit(args, scenario, report)
    return 0


def cmd_certify(args) -> int:
    scenario = load_scenario(args.scenario)
    record = run_protocol(_need(scenario, "protocol", "certify"), _need(scenario, "eve", "certify"))
    security = bounds.certify(record, include_family_rows=args.family_rows)
    report = _report_skeleton(scenario)
    report["record_summary"] = _record_summary(record)
    report["security_report"] = _security_dict(security)
    if scenario.compose is not None:
        report["compose_budget"] = _compose_dict(scenario.compose)
    _emit(args, scenario, report)
    return 0 if security.passed else 1


def _sweep_point(scenario: Scenario, param: str, value: float) -> dict:
    varied = apply_sweep_value(scenario, param, value)
    record = run_protocol(varied.protocol, varied.eve)
    security = bounds.certify(record)
    by_name = {r.name: r for r in security.rows}
    return {
        "value": value,
        "eps_composable": security.eps_composable,
        "eps_privacy": security.eps_privacy,
        "b1_rhs": by_name["B1"].rhs,
        "b2_rhs": by_name["B2"].rhs,
        "hol_rhs": by_name["HOL"].rhs,
        "fid_rhs": by_name["FID"].rhs,
        "passed": security.passed,
    }


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    _need(scenario, "protocol", "sweep")
    _need(scenario, "eve", "sweep")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ScenarioError(f"--values must be a comma-separated list of numbers: {exc}") from exc
    if not values:
        raise ScenarioError("--values must name at least one value")
    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(lambda v: _sweep_point(scenario, args.param, v), values))
    else:
        rows = [_sweep_point(scenario, args.param, v) for v in values]
    all_passed = all(r["passed"] for r in rows)
    fmt = args.format or scenario.output.format
    if fmt == "csv":
        lines = [",".join(SWEEP_COLUMNS)]
        for r in rows:
            rounded = _round_floats({k: r[k] for k in SWEEP_COLUMNS})
            lines.append(",".join(str(rounded[c]) for c in SWEEP_COLUMNS))
        text = "\n".join(lines) + "\n"
        path = args.out or scenario.output.path
        if path:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    else:
        report = _report_skeleton(scenario)
        report["record_summary"] = {"sweep_param": args.param, "sweep_rows": rows}
        _emit(args, scenario, report)
    return 0 if all_passed else 1


def cmd_compose(args) -> int:
    scenario = load_scenario(args.scenario)
    tree = _need(scenario, "compose", "compose")
    report = _report_skeleton(scenario)
    report["compose_budget"] = _compose_dict(tree)
    _emit(args, scenario, report)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qkdlab",
        description="Simulate key distribution under eavesdropping and certify its security bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--scenario", required=True, help="path to a scenario JSON file")
        p.add_argument("--out", default=None, help="write the report here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default=None, help="report format")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweep points")

    p_sim = sub.add_parser("simulate", help="run the protocol and summarize the record")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_cert = sub.add_parser("certify", help="run the protocol and evaluate every security bound")
    common(p_cert)
    p_cert.add_argument(
        "--family-rows",
        action="store_true",
        help="add informational rows rated against the explicit-measurement mu2",
    )
    p_cert.set_defaults(func=cmd_certify)

    p_sweep = sub.add_parser("sweep", help="certify across a grid of one parameter")
    common(p_sweep)
    p_sweep.add_argument("--param", required=True, help=f"one of: {', '.join(SWEEP_PARAMS)}")
    p_sweep.add_argument("--values", required=True, help="comma-separated parameter values")
    p_sweep.set_defaults(func=cmd_sweep)

    p_comp = sub.add_parser("compose", help="total a composition budget tree")
    common(p_comp)
    p_comp.set_defaults(func=cmd_compose)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        return args.func(args)
    except (ScenarioError, CapacityError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
