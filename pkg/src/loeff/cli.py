"""Command-line front end.

    loeff efficiency --file F --state NAME --measure s -K 1
    loeff verify --suite theorem-200 --jobs 4
    loeff verify --file F
    loeff trace --file F --scenario NAME

Exit codes: 0 success, 1 violations found, 2 configuration error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from loeff import report
from loeff.efficiency import MEASURES, efficiency
from loeff.errors import ConfigurationError, NumericalError
from loeff.harness import BUILTIN_SUITES, run_all_outcomes, run_scenario, sweep
from loeff.scenario_file import EfficiencyRequest, Resolver, ScenarioRequest, SweepRequest, load

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

TOLERANCE_FLAGS = ("bisect_tol", "psd_tol", "recon_tol", "restarts", "maxfev", "ray_starts")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the file seed (suites start at 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--cutoff", type=int, default=None, help="override the per-mode photon cutoff")
    p.add_argument("--output", type=Path, default=None, help="also write the report here")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("-v", "--verbose", action="store_true")
    tol = p.add_argument_group("tolerance overrides")
    tol.add_argument("--bisect-tol", type=float)
    tol.add_argument("--psd-tol", type=float)
    tol.add_argument("--recon-tol", type=float)
    tol.add_argument("--restarts", type=int)
    tol.add_argument("--maxfev", type=int)
    tol.add_argument("--ray-starts", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loeff", description="Loss-based efficiency of multimode bosonic states.")
    sub = parser.add_subparsers(dest="command", required=True)

    eff = sub.add_parser("efficiency", help="compute an efficiency measure")
    eff.add_argument("--file", type=Path, required=True)
    eff.add_argument("--state", help="state name (with --measure and -K)")
    eff.add_argument("--measure", choices=MEASURES)
    eff.add_argument("-K", type=int, default=1)
    eff.add_argument("--request", help="run the named efficiency request from the file")
    _common(eff)

    ver = sub.add_parser("verify", help="run scenario checks or a built-in suite")
    src = ver.add_mutually_exclusive_group(required=True)
    src.add_argument("--file", type=Path)
    src.add_argument("--suite", choices=sorted(BUILTIN_SUITES))
    _common(ver)

    tr = sub.add_parser("trace", help="dump the full proof trace of a scenario")
    tr.add_argument("--file", type=Path, required=True)
    tr.add_argument("--scenario", required=True)
    _common(tr)
    return parser


def _overrides(args) -> dict:
    return {k: getattr(args, k) for k in TOLERANCE_FLAGS if getattr(args, k) is not None}


def _resolver(args) -> Resolver:
    spec = load(args.file)
    return Resolver(spec, cutoff=args.cutoff, tolerance_overrides=_overrides(args))


def _seed(args, resolver: Resolver | None) -> int:
    if args.seed is not None:
        return args.seed
    return resolver.spec.seed if resolver is not None else 0


def cmd_efficiency(args) -> tuple[dict, str, int]:
    res = _resolver(args)
    seed = _seed(args, res)
    if args.request:
        req = res.spec.request(args.request)
        if not isinstance(req, EfficiencyRequest):
            raise ConfigurationError(f"request {args.request!r} is not an efficiency request")
        jobs = [(req.state, req.measure, req.K)]
    elif args.state:
        if args.measure is None:
            raise ConfigurationError("--state needs --measure")
        jobs = [(args.state, args.measure, args.K)]
    else:
        jobs = [(r.state, r.measure, r.K) for r in res.spec.requests if isinstance(r, EfficiencyRequest)]
        if not jobs:
            raise ConfigurationError("no --state given and the file has no efficiency requests")
    results = []
    for name, measure, k in jobs:
        out = efficiency(res.state(name), measure, k, res.tolerances, seed)
        results.append(report.efficiency_payload(out, name))
    payload = {"command": "efficiency", "seed": seed, "results": results}
    csv_text = report.csv_table(results, report.EFFICIENCY_COLUMNS)
    return payload, csv_text, EXIT_OK


def cmd_verify(args) -> tuple[dict, str, int]:
    sections = []
    rows: list[dict] = []
    if args.suite:
        seed = _seed(args, None)
        rep = BUILTIN_SUITES[args.suite](jobs=args.jobs, seed=seed)
        sections.append(report.sweep_payload(args.suite, rep))
        rows.extend(rep.rows)
        source = args.suite
    else:
        res = _resolver(args)
        seed = _seed(args, res)
        runnable = [r for r in res.spec.requests if isinstance(r, (ScenarioRequest, SweepRequest))]
        if not runnable:
            raise ConfigurationError(f"{args.file} has no scenario or sweep requests to verify")
        for req in runnable:
            if isinstance(req, SweepRequest):
                kind, seeds, params = res.sweep_params(req)
                if args.seed is not None:
                    seeds = [args.seed + i for i in range(len(seeds))]
                rep = sweep(kind, seeds, jobs=args.jobs, **params)
                sections.append(report.sweep_payload(req.name, rep))
                rows.extend(rep.rows)
            else:
                sc = res.scenario(req)
                reports = run_all_outcomes(sc) if req.all_outcomes else [run_scenario(sc)]
                srows = report.scenario_rows(reports)
                sections.append(
                    {
                        "name": req.name,
                        "kind": "scenario",
                        "runs": len(srows),
                        "violations": sum(r["violation"] for r in srows),
                        "worst_slack": min(r["slack"] for r in srows),
                        "worst_margin": min(r["margin"] for r in srows),
                        "rows": srows,
                    }
                )
                rows.extend(srows)
        source = str(args.file)
    violations = sum(1 for r in rows if r["violation"])
    slacks = [r["slack"] for r in rows if r["slack"] is not None]
    payload = {
        "command": "verify",
        "source": source,
        "seed": seed,
        "runs": len(rows),
        "violations": violations,
        "worst_slack": min(slacks) if slacks else None,
        "sections": sections,
    }
    return payload, report.csv_table(rows), EXIT_VIOLATIONS if violations else EXIT_OK


def cmd_trace(args) -> tuple[dict, str, int]:
    res = _resolver(args)
    req = res.spec.request(args.scenario)
    if not isinstance(req, ScenarioRequest):
        raise ConfigurationError(f"request {args.scenario!r} is not a scenario")
    sc = res.scenario(req)
    reports = run_all_outcomes(sc) if req.all_outcomes else [run_scenario(sc)]
    payload = {
        "command": "trace",
        "scenario": req.name,
        "seed": sc.seed,
        "runs": [report.scenario_payload(r) for r in reports],
    }
    ok = all(r.ok for r in reports)
    return payload, report.csv_table(report.scenario_rows(reports)), EXIT_OK if ok else EXIT_VIOLATIONS


COMMANDS = {"efficiency": cmd_efficiency, "verify": cmd_verify, "trace": cmd_trace}


def _summary_line(payload: dict) -> str | None:
    if payload["command"] == "verify":
        return f"{payload['source']}: {payload['runs']} runs, {payload['violations']} violations, worst slack {payload['worst_slack']}"
    return None


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    begin = time.perf_counter()
    try:
        if args.jobs < 1:
            raise ConfigurationError("--jobs must be at least 1")
        payload, csv_text, code = COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"loeff: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"loeff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    payload["wall_time"] = time.perf_counter() - begin
    text = report.dumps(payload) if args.format == "json" else csv_text
    sys.stdout.write(text)
    if args.output is not None:
        try:
            args.output.write_text(text)
        except OSError as exc:
            print(f"loeff: cannot write {args.output}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    line = _summary_line(payload)
    if line:
        print(line, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
