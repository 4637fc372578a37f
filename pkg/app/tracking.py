import time
import uuid
from collections import Counter
from typing import Dict, Optional

from app.logging_config import get_logger

logger = get_logger(__name__)


class RunTracker:
    """Run identity, timing and per-kind counters for one command invocation"""

    def __init__(self, command: str, run_id: Optional[str] = None):
        self.command = command
        self.run_id = run_id or str(uuid.uuid4())
        self.counts: Counter = Counter()
        self.error_count = 0
        self.duration_ms: Optional[float] = None
        self._start: Optional[float] = None

    def __enter__(self) -> "RunTracker":
        self._start = time.perf_counter()
        logger.info(
            "Run started",
            extra={"run_id": self.run_id, "command": self.command}
        )
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self.duration_ms = round((time.perf_counter() - self._start) * 1000, 2)
        if exc is not None:
            self.error_count += 1
        logger.info(
            "Run completed" if exc is None else "Run failed",
            extra={
                "run_id": self.run_id,
                "command": self.command,
                "duration_ms": self.duration_ms,
            }
        )
        return False

    def record(self, kind: str, n: int = 1) -> None:
        self.counts[kind] += n

    def snapshot(self) -> Dict[str, object]:
        return {
            "run_id": self.run_id,
            "command": self.command,
            "counts": dict(sorted(self.counts.items())),
            "error_count": self.error_count,
            "duration_ms": self.duration_ms,
        }
