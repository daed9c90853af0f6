"""Command line entry point: ``vdlt run | verify | report``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from .scenario import ParseError, ValidationError, load_scenario
from .simulation import SimulationError, run
from .verify import CHECKS, MUTATIONS, verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def write_outputs(result, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / "summary.json"
    metrics_path = out_dir / "metrics.csv"
    summary_path.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    with metrics_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "class", "metric", "value"])
        w.writerows(result.rows)
    return summary_path, metrics_path


def failed_invariants(summary: dict) -> list[str]:
    inv = summary["invariants"]
    bad = [k for k in ("user_blocks_by_control", "scavenger_served_while_backlogged",
                       "down_nodes_in_committees", "conservation_failures") if inv[k]]
    bad += [k for k in ("inflation_within_cap", "accounting_balanced") if not inv[k]]
    return bad


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except (ParseError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    sc = sc.with_overrides(seed=args.seed, consensus=args.consensus, solver=args.solver)
    try:
        result = run(sc)
    except SimulationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL
    out = Path(args.out or os.environ.get("VDLT_OUT") or "vdlt-out")
    summary_path, metrics_path = write_outputs(result, out)
    print(f"trace digest {result.digest}")
    print(f"wrote {summary_path} and {metrics_path}")
    bad = failed_invariants(result.summary)
    if bad:
        print(f"invariant failures: {', '.join(bad)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify(args.check or None, args.mutate)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    failed = [r.name for r in results if not r.ok]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def format_report(summary: dict) -> str:
    lines = [f"scenario {summary['scenario']} seed {summary['seed']} "
             f"({summary['epochs_run']} epochs, {summary['consensus_mode']}, {summary['solver']})"]
    lines.append(f"{'class':<24}{'sub':>6}{'done':>6}{'drop':>6}{'mean lat':>10}{'p95':>8}{'tput':>8}")
    for label, c in summary["classes"].items():
        if not c["submitted"]:
            continue
        mean = "-" if c["mean_latency"] is None else f"{c['mean_latency']:.1f}"
        p95 = "-" if c["p95_latency"] is None else f"{c['p95_latency']:.0f}"
        lines.append(f"{label:<24}{c['submitted']:>6}{c['committed']:>6}{c['dropped']:>6}"
                     f"{mean:>10}{p95:>8}{c['throughput']:>8.2f}")
    acc = summary["accounting"]
    lines.append(f"accounting: {acc['committed']} committed, {acc['dropped']} dropped, "
                 f"{acc['pending_at_end']} pending")
    mpc = summary["messages_per_commit"]
    lines.append(f"messages per commit: control {mpc['control']}, execution {mpc['execution']}")
    eco = summary["economics"]
    lines.append(f"supply {eco['supply']} (minted {eco['minted']}, burned {eco['burned']})")
    lines.append(f"trace digest {summary['trace_digest']}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    try:
        summary = json.loads(Path(args.summary).read_text())
        print(format_report(summary))
    except (OSError, ValueError, KeyError) as e:
        print(f"error: cannot read summary: {e}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vdlt", description="Service-oriented DLT simulator")
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate a scenario file")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out", help="output directory (default: $VDLT_OUT or ./vdlt-out)")
    r.add_argument("--consensus", choices=["classical", "multisig"])
    r.add_argument("--solver", choices=["greedy", "exhaustive", "qlearn"])
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run the oracle suite")
    v.add_argument("--check", action="append", choices=sorted(CHECKS), help="run only this check (repeatable)")
    v.add_argument("--mutate", choices=MUTATIONS, help="deliberately break a mechanism first")
    v.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="print a summary.json as a table")
    rep.add_argument("summary")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
