"""
Standardized error handling for wow_flow operations.

Every failure raised by the library derives from ``WowFlowError`` so the command line
front end can map whole families of problems onto exit codes:

- ``ConfigError``: inconsistent or missing settings (exit 2)
- ``DataFormatError``: corrupt or truncated files, bad magic numbers (exit 3)
- ``NumericError`` / ``IntegrationError`` / ``ConvergenceError``: numeric failures (exit 4)

Usage examples:
- Raise the exception classes directly: ``raise ShapeError("dim mismatch: 2 != 3")``
- Use the ``wow_operation`` decorator to log and re-raise uniformly
"""

import functools
import logging
from typing import Any, Callable, Optional, TypeVar

T = TypeVar("T")

__all__ = [
    "WowFlowError",
    "ShapeError",
    "ConvergenceError",
    "IntegrationError",
    "NumericError",
    "DataFormatError",
    "ConfigError",
    "CouplingError",
    "wow_operation",
]


class WowFlowError(RuntimeError):
    """Base class for all wow_flow exceptions."""

    pass


class ShapeError(WowFlowError, ValueError):
    """Raised when clouds, plans or parameter tensors have incompatible shapes."""

    pass


class ConvergenceError(WowFlowError):
    """Raised when an iterative solver misses its tolerance within the iteration budget.

    Attributes:
        violation: The marginal violation reached when the budget ran out.
        iterations: Number of iterations performed.
    """

    def __init__(self, message: str, violation: float, iterations: int):
        super().__init__(message)
        self.violation = violation
        self.iterations = iterations


class IntegrationError(WowFlowError):
    """Raised when an ODE state becomes non-finite.

    Attributes:
        step: Index of the Euler step that produced the non-finite state.
    """

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class NumericError(WowFlowError):
    """Raised when training produces a non-finite loss.

    Attributes:
        step: Training step at which the loss became non-finite.
        seed_state: Seed material needed to replay the offending step.
    """

    def __init__(self, message: str, step: int, seed_state: Any = None):
        super().__init__(message)
        self.step = step
        self.seed_state = seed_state


class DataFormatError(WowFlowError, ValueError):
    """Raised for malformed binary files and unusable input data.

    Attributes:
        offset: Byte offset at which the problem was detected, ``None`` for content errors.
    """

    def __init__(self, message: str, offset: Optional[int] = 0):
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(WowFlowError, ValueError):
    """Raised for invalid or inconsistent configuration."""

    pass


class CouplingError(WowFlowError):
    """Raised when a coupling cannot be built from the supplied inputs."""

    pass


def wow_operation(error_message: str = "Operation failed") -> Callable[[Callable[..., T]], Callable[..., T]]:
    """
    Decorator that logs failures of the wrapped callable and re-raises them unchanged.

    The logger is taken from a ``logger`` attribute of the first positional argument when
    there is one, otherwise the module logger is used.

    Example:
        @wow_operation(error_message="Barycenter failed")
        def barycenter(self):
            ...
    """

    def decorator(function: Callable[..., T]) -> Callable[..., T]:
        @functools.wraps(function)
        def wrapper(*args, **kwargs) -> T:
            try:
                return function(*args, **kwargs)
            except Exception as e:
                logger = getattr(args[0], "logger", None) if args else None
                if not isinstance(logger, logging.Logger):
                    logger = logging.getLogger(__name__)
                logger.error(f"{error_message}: {e}")
                raise

        return wrapper

    return decorator
