"""cfextract command line: extract, regions, demo, raster."""
import argparse
from typing import List, Optional

from app.commands import demo, extract, raster, regions
from app.config import settings
from app.errors import error_handler
from app.logging_config import get_logger, setup_logging
from app.tracking import RunTracker

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Model extraction from counterfactual explanations and forced-region certification",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    parser.add_argument("--log-file", default=settings.LOG_FILE)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in (extract, regions, demo, raster):
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_level=args.log_level, log_file=args.log_file)
    tracker = RunTracker(args.command)
    try:
        with tracker:
            code = args.handler(args, tracker)
    except Exception as exc:
        return error_handler(exc, tracker.run_id)
    logger.info(
        f"{settings.APP_NAME} {args.command} finished",
        extra={"run_id": tracker.run_id, "exit_code": code, "duration_ms": tracker.duration_ms},
    )
    return code
