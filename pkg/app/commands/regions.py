import argparse
import sys

from app.commands import load_config
from app.errors import EXIT_OK, AssertionFailure
from app.harness import canonical_json, run_regions
from app.tracking import RunTracker


def register(subparsers) -> None:
    parser = subparsers.add_parser("regions", help="Certify forced regions of a recorded ledger")
    parser.add_argument("--config", required=True, help="Scenario JSON with a raster section")
    parser.add_argument("--ledger", required=True, help="Query ledger (JSONL)")
    parser.add_argument("--raster", help="Raster CSV output path")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, tracker: RunTracker) -> int:
    config = load_config(args.config)
    report = run_regions(config, args.ledger, args.raster)
    for kind, n in report.counts.items():
        tracker.record(kind, n)
    sys.stdout.write(canonical_json(report))
    if not report.passed:
        raise AssertionFailure("; ".join(report.failures))
    return EXIT_OK
