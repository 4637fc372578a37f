import argparse
import sys

from app.errors import EXIT_OK
from app.harness import run_demo
from app.tracking import RunTracker


def register(subparsers) -> None:
    parser = subparsers.add_parser("demo", help="Replay the two worked examples")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, tracker: RunTracker) -> int:
    sys.stdout.write(run_demo())
    return EXIT_OK
