"""Error types shared across skillserve.

Two styles coexist, as in the launcher this code grew out of:

- ``Result`` / ``Error`` / ``ErrorReport`` for load paths that must report and
  keep going (manifest parsing, folder validation, config files).
- ``SkillServeError`` subclasses for paths that abort a request or startup.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, StrEnum
from typing import Generic, TypeVar

from loguru import logger

T = TypeVar("T")


# =============================================================================
# Result + ErrorReport
# =============================================================================


class ErrorType(Enum):
    FILE_NOT_FOUND = "file_not_found"
    PARSE_ERROR = "parse_error"
    VALIDATION_ERROR = "validation_error"
    PERMISSION_ERROR = "permission_error"


@dataclass
class Error:
    error_type: ErrorType
    message: str
    context: dict = field(default_factory=dict)
    original_exception: Exception | None = None


@dataclass
class Result(Generic[T]):
    success: bool
    value: T | None = None
    error: Error | None = None

    @staticmethod
    def ok(value: T) -> Result[T]:
        return Result(success=True, value=value)

    @staticmethod
    def err(error: Error) -> Result[T]:
        return Result(success=False, error=error)

    def is_ok(self) -> bool:
        return self.success

    def is_err(self) -> bool:
        return not self.success

    def unwrap(self) -> T:
        """Return the value or raise ConfigurationError carrying the error message."""
        if not self.success or self.error is not None:
            message = self.error.message if self.error else "empty result"
            raise ConfigurationError(message)
        return self.value  # type: ignore[return-value]


@dataclass
class ErrorReport:
    errors: list[Error] = field(default_factory=list)
    warnings: list[Error] = field(default_factory=list)

    def add_error(self, error: Error) -> None:
        self.errors.append(error)
        # bind() so braces in the message are not treated as format fields
        logger.bind(
            operation="error_report",
            status="error",
            error_type=error.error_type.value,
            **error.context,
        ).error(error.message)

    def add_warning(self, error: Error) -> None:
        self.warnings.append(error)
        logger.bind(
            operation="error_report",
            status="warning",
            error_type=error.error_type.value,
            **error.context,
        ).warning(error.message)

    def has_errors(self) -> bool:
        return len(self.errors) > 0

    def log_summary(self, op_trace_id: str, operation: str = "error_report") -> None:
        logger.info(
            "Operation complete",
            operation=operation,
            status="complete",
            trace_id=op_trace_id,
            metrics={
                "total_errors": len(self.errors),
                "total_warnings": len(self.warnings),
            },
        )


# =============================================================================
# Exceptions
# =============================================================================


class SkillServeError(Exception):
    """Base class for every exception raised by skillserve."""


class ConfigurationError(SkillServeError):
    """A manifest, metadata source or server setting is unusable."""


class StartupError(SkillServeError):
    """The server refuses to start (missing dirs, duplicate skills, loopback gate)."""


class ContractViolation(SkillServeError):
    """An operation was called outside its precondition."""


class ScaffoldError(SkillServeError):
    """init refused: non-empty target, unreadable source, or an existing skill folder."""


class HandlerErrorKind(StrEnum):
    TIMEOUT = "timeout"
    FAILED = "failed"
    BAD_OUTPUT = "bad_output"


class HandlerError(SkillServeError):
    """A handler timed out, raised, or produced output that breaks its contract."""

    def __init__(self, kind: HandlerErrorKind, message: str):
        if not message:
            message = f"handler {kind.value}"
        super().__init__(message)
        self.kind = kind
        self.message = message

    @classmethod
    def timeout(cls, timeout_secs: float) -> HandlerError:
        return cls(HandlerErrorKind.TIMEOUT, f"handler timeout after {timeout_secs:g}s")

    def __repr__(self) -> str:
        return f"HandlerError({self.kind.value!r}, {self.message!r})"


class EditOverrideKind(StrEnum):
    NOT_FOUND = "not_found"
    TYPE_CHECK = "type_check"
    MALFORMED = "malformed"


class EditOverrideError(SkillServeError):
    """A hot-swap override was rejected; the skill's binding is unchanged."""

    def __init__(self, kind: EditOverrideKind, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message
