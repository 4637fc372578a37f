import argparse
import sys

from app.errors import EXIT_OK, AssertionFailure
from app.harness import canonical_json, raster_figure
from app.tracking import RunTracker


def register(subparsers) -> None:
    parser = subparsers.add_parser("raster", help="Write the raster CSVs of a figure scenario")
    parser.add_argument("--figure", type=int, choices=(2, 3, 5), required=True)
    parser.add_argument("--out-dir", default="rasters", help="Directory for one CSV per panel")
    parser.add_argument("--resolution", type=int, default=200)
    parser.add_argument("--samples", type=int, default=0, help="Sampler cross-check size per panel")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, tracker: RunTracker) -> int:
    report = raster_figure(args.figure, args.out_dir, args.resolution, args.samples)
    tracker.record("panels", len(report.regions))
    sys.stdout.write(canonical_json(report))
    if not report.passed:
        raise AssertionFailure("; ".join(report.failures))
    return EXIT_OK
