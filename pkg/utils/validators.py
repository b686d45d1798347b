"""
Data validation utilities.

Provides validation functions for configuration values and experiment inputs.
"""

import logging
import math
from typing import Any, Iterable, List, Sequence, Union

logger = logging.getLogger(__name__)

Exponent = Union[int, float, str]


class ValidationError(Exception):
    """Configuration or precondition error (CLI exit status 2)."""

    pass


def validate_finite(value: Any, name: str) -> float:
    """
    Validate that a value is a finite real number.

    Args:
        value: Value to validate.
        name: Key path used in the error message.

    Returns:
        The value as float.

    Raises:
        ValidationError: If value is not a finite number.
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return float(value)


def validate_positive(value: Any, name: str, allow_zero: bool = False) -> float:
    """
    Validate a strictly positive (or non-negative) finite number.

    Raises:
        ValidationError: If value is out of range.
    """
    number = validate_finite(value, name)
    if allow_zero and number < 0:
        raise ValidationError(f"{name} must be >= 0, got {number}")
    if not allow_zero and number <= 0:
        raise ValidationError(f"{name} must be > 0, got {number}")
    return number


def validate_count(value: Any, name: str, minimum: int = 1) -> int:
    """
    Validate an integer count with a lower bound.

    Raises:
        ValidationError: If value is not an integer or below minimum.
    """
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValidationError(f"{name} must be >= {minimum}, got {value}")
    return value


def validate_interval(lo: Any, hi: Any, name: str) -> tuple:
    """
    Validate a finite interval with lo < hi.

    Raises:
        ValidationError: If bounds are not finite or not ordered.
    """
    left = validate_finite(lo, f"{name}[0]")
    right = validate_finite(hi, f"{name}[1]")
    if not right > left:
        raise ValidationError(f"{name} requires lower < upper, got ({left}, {right})")
    return left, right


def validate_exponent(p: Exponent, name: str = "p") -> float:
    """
    Validate an L^p exponent: a number >= 1 or the string "inf".

    Args:
        p: Exponent value from config or caller.
        name: Key path used in the error message.

    Returns:
        The exponent as float (math.inf for infinity).

    Raises:
        ValidationError: If p < 1 or unparseable.
    """
    if isinstance(p, str):
        if p.strip().lower() in ("inf", "infinity"):
            return math.inf
        raise ValidationError(f"{name} must be a number >= 1 or 'inf', got {p!r}")
    if isinstance(p, bool) or not isinstance(p, (int, float)) or math.isnan(p):
        raise ValidationError(f"{name} must be a number >= 1 or 'inf', got {p!r}")
    if p < 1:
        raise ValidationError(f"{name} must be >= 1, got {p}")
    return float(p)


def validate_choice(value: Any, choices: Iterable[str], name: str) -> str:
    """
    Validate that a string belongs to a fixed set.

    Raises:
        ValidationError: If value is not one of the choices.
    """
    options = list(choices)
    if value not in options:
        raise ValidationError(f"{name} must be one of {options}, got {value!r}")
    return str(value)


def validate_increasing(values: Sequence[Any], name: str) -> List[float]:
    """
    Validate a non-empty, strictly increasing list of finite numbers.

    Raises:
        ValidationError: If the list is empty or not strictly increasing.
    """
    if not isinstance(values, (list, tuple)) or not values:
        raise ValidationError(f"{name} must be a non-empty list")
    numbers = [validate_finite(v, f"{name}[{i}]") for i, v in enumerate(values)]
    for i in range(1, len(numbers)):
        if not numbers[i] > numbers[i - 1]:
            raise ValidationError(f"{name} must be strictly increasing at index {i}")
    return numbers
