import argparse
import sys

from app.commands import load_config
from app.errors import EXIT_OK, AssertionFailure, BudgetMismatchError
from app.harness import canonical_json, run_extract, write_report
from app.logging_config import get_logger
from app.tracking import RunTracker

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("extract", help="Run an extraction attack over seeded trials")
    parser.add_argument("--config", required=True, help="Scenario JSON")
    parser.add_argument("--out", help="Write the canonical JSON report here instead of stdout")
    parser.add_argument("--ledger-out", help="Write trial 0's query ledger (JSONL) here")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, tracker: RunTracker) -> int:
    config = load_config(args.config)
    report = run_extract(config, ledger_out=args.ledger_out)
    for kind, n in report.counts.items():
        tracker.record(kind, n)
    if args.out:
        write_report(report, args.out)
        logger.info(f"Report written to {args.out}", extra={"run_id": tracker.run_id})
    else:
        sys.stdout.write(canonical_json(report))

    if report.passed:
        return EXIT_OK
    budget_diff = [
        f"{row.query_type}: expected {row.expected_total}, observed {row.observed_total}"
        for row in report.budget if not row.matches
    ]
    if budget_diff:
        raise BudgetMismatchError(budget_diff)
    raise AssertionFailure("; ".join(report.failures))
