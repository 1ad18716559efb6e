"""
Exception hierarchy shared by all dimg-lab modules.

Each error also derives from the built-in exception that callers would
naturally catch (ValueError, RuntimeError, AssertionError).
"""
from typing import Any, Optional


class DimgError(Exception):
    """Base class for all dimg-lab errors."""


class DomainError(DimgError, ValueError):
    """An operation was called outside its precondition."""


class ResourceCapError(DimgError, RuntimeError):
    """An enumeration exceeded its configured cap."""

    def __init__(self, message: str, cap: int):
        super().__init__(f"{message} (cap={cap})")
        self.cap = cap


class ScenarioError(DimgError, ValueError):
    """A scenario file could not be parsed or failed validation."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class ConfigError(DimgError, ValueError):
    """The run configuration is invalid."""


class DesignError(DimgError, RuntimeError):
    """A stage design problem that must be solvable was not."""


class BoundViolationError(DimgError, AssertionError):
    """The performance-deviation bound was violated."""

    def __init__(self, report: Any):
        super().__init__(f"Deviation bound violated: {report}")
        self.report = report
