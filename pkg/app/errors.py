from typing import Optional

from app.logging_config import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_ERROR = 2


class ToolError(Exception):
    """Base class for every failure the package reports on purpose"""

    exit_code = EXIT_ERROR

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class InvalidVectorError(ToolError, ValueError):
    pass


class DimensionMismatchError(ToolError, ValueError):
    def __init__(self, expected: int, got: int, what: str = "vector"):
        super().__init__(f"dimension mismatch: {what} has dimension {got}, expected {expected}")
        self.expected = expected
        self.got = got


class DegenerateDirectionError(ToolError, ValueError):
    def __init__(self, detail: str = "degenerate direction"):
        super().__init__(detail)


class NormNotSupportedError(ToolError, ValueError):
    pass


class RankDeficiencyError(ToolError):
    """Linear system does not have a one-dimensional solution space"""

    def __init__(self, rank: int, expected: int, detail: Optional[str] = None):
        super().__init__(detail or f"degenerate query set: measured rank {rank}, expected {expected}")
        self.rank = rank
        self.expected = expected


class NoConsistentOrientationError(ToolError):
    def __init__(self, detail: str = "no consistent orientation"):
        super().__init__(detail)


class InconsistentLedgerError(ToolError, ValueError):
    def __init__(self, reason: str):
        super().__init__(f"inconsistent ledger: {reason}")
        self.reason = reason


class SolverFailureError(ToolError):
    def __init__(self, backend: str, status: str):
        super().__init__(f"solver failure ({backend}): {status}")
        self.backend = backend
        self.status = status


class SamplingError(ToolError):
    def __init__(self, proposals: int):
        super().__init__(f"model measure-zero or infeasible: no acceptance after {proposals} proposals")
        self.proposals = proposals


class ConfigurationError(ToolError, ValueError):
    pass


class AssertionFailure(ToolError):
    """A run finished but one of its checks did not hold"""

    exit_code = EXIT_ASSERTION


class BudgetMismatchError(AssertionFailure):
    def __init__(self, diff: list):
        lines = "; ".join(diff)
        super().__init__(f"query budget mismatch: {lines}")
        self.diff = diff


def error_handler(exc: Exception, run_id: str = "unknown") -> int:
    """Log a failure and map it to a process exit code"""

    if isinstance(exc, ToolError):
        logger.warning(
            f"{type(exc).__name__}: {exc.detail}",
            extra={"run_id": run_id, "exit_code": exc.exit_code}
        )
        return exc.exit_code

    logger.error(
        f"Unexpected error: {str(exc)}",
        extra={"run_id": run_id, "exit_code": EXIT_ERROR},
        exc_info=exc
    )
    return EXIT_ERROR
