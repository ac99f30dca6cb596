"""Argument validators shared by the solvers, generators and the command line front end."""

from typing import Any, Optional

from wow_flow.errors import ConfigError

__all__ = [
    "validate_positive_int",
    "validate_positive_float",
    "validate_range",
]


def validate_positive_int(value: Any, name: str, minimum: int = 1) -> int:
    """
    Validates that ``value`` is an integer (or integer string) no smaller than ``minimum``.

    Args:
        value (Any): The candidate value, an ``int`` or a decimal string.
        name (str): Parameter name used in error messages.
        minimum (int): Smallest accepted value. Defaults to 1.

    Returns:
        int: The validated integer.

    Raises:
        TypeError: If ``value`` is neither an integer nor a string.
        ConfigError: If ``value`` cannot be converted or is below ``minimum``.
    """
    if isinstance(value, bool) or not isinstance(value, (int, str)):
        raise TypeError(f"{name} must be an integer or string, got {type(value).__name__}")

    try:
        validated = int(value)
    except (ValueError, OverflowError) as err:
        raise ConfigError(f"{name} must be convertible to integer: {err}")

    if validated < minimum:
        raise ConfigError(f"{name} {validated} must be >= {minimum}")

    return validated


def validate_positive_float(value: Any, name: str, allow_zero: bool = False) -> float:
    """
    Validates that ``value`` converts to a finite float that is positive (or non-negative).

    Args:
        value (Any): The candidate value.
        name (str): Parameter name used in error messages.
        allow_zero (bool): Accept zero as well. Defaults to False.

    Returns:
        float: The validated value.

    Raises:
        ConfigError: If the value is not a finite number in range.
    """
    try:
        validated = float(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{name} must be a number: {err}")

    if validated != validated or validated in (float("inf"), float("-inf")):
        raise ConfigError(f"{name} must be finite, got {validated}")
    if validated < 0 or (validated == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ConfigError(f"{name} {validated} must be {bound}")

    return validated


def validate_range(low: float, high: float, name: str, upper: Optional[float] = None) -> tuple:
    """
    Validates an ordered pair ``low <= high`` (and ``high <= upper`` when given).

    Returns:
        tuple: ``(low, high)`` unchanged.

    Raises:
        ConfigError: If the pair is out of order or exceeds ``upper``.
    """
    if low > high:
        raise ConfigError(f"{name} range is empty: {low} > {high}")
    if upper is not None and high > upper:
        raise ConfigError(f"{name} upper bound {high} exceeds {upper}")
    return low, high
