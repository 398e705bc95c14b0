import abc
import numbers
import typing

import numpy as np

from .validation_context import ValidationContext
from .validation_result import ValidationResult


def _as_array(value: typing.Any) -> np.ndarray:
    for attribute in ("components", "data"):
        if hasattr(value, attribute):
            return np.asarray(getattr(value, attribute), dtype=float)
    return np.asarray(value, dtype=float)


class AbstractArgumentValidator(abc.ABC):
    """
    An abstract class that is the base for all argument and configuration validators
    """

    @abc.abstractmethod
    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        """
        Returns the validation result of the given value

            Parameters:
                name (str): Name of the argument or configuration key, used in invalid reason messages.
                value (typing.Any): The value to be validated
                validation_context (ValidationContext): Extra information about where the value is used

            Returns:
                result (ValidationResult): validation result for the given value
        """
        pass  # pragma: no cover


class FiniteValidator(AbstractArgumentValidator):
    """Ensures a number, array or field holds no NaN or infinite entries"""

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        try:
            finite = bool(np.all(np.isfinite(_as_array(value))))
        except (TypeError, ValueError):
            finite = False
        if finite:
            return ValidationResult(True)
        return ValidationResult(False, f"'{name}' must be finite", rule="finite")


class PositiveValidator(AbstractArgumentValidator):
    """Ensures the provided number is strictly positive"""

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        if isinstance(value, numbers.Real) and not isinstance(value, bool) and value > 0:
            return ValidationResult(True)
        return ValidationResult(False, f"'{name}' must be positive", rule="positive")


class NonNegativeValidator(AbstractArgumentValidator):
    """Ensures the provided number is zero or positive"""

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        if isinstance(value, numbers.Real) and not isinstance(value, bool) and value >= 0:
            return ValidationResult(True)
        return ValidationResult(False, f"'{name}' must be non-negative", rule="non-negative")


class RangeValidator(AbstractArgumentValidator):
    """
    Ensures the provided number lies in the closed interval [lower, upper].

    Parameters:
        lower (Optional[float]): Smallest admissible value, unbounded if ``None``.
        upper (Optional[float]): Largest admissible value, unbounded if ``None``.
        integer (bool): Whether the value must also be an integer.
    """

    def __init__(
        self, lower: typing.Optional[float] = None, upper: typing.Optional[float] = None, integer: bool = False
    ):
        self._lower = lower
        self._upper = upper
        self._integer = integer

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        kind = numbers.Integral if self._integer else numbers.Real
        if not isinstance(value, kind) or isinstance(value, bool):
            noun = "an integer" if self._integer else "a number"
            return ValidationResult(False, f"'{name}' must be {noun}", rule="type")
        if (self._lower is not None and value < self._lower) or (self._upper is not None and value > self._upper):
            lower = "-inf" if self._lower is None else f"{self._lower:g}"
            upper = "inf" if self._upper is None else f"{self._upper:g}"
            return ValidationResult(False, f"'{name}' must lie in [{lower}, {upper}]", rule="range")
        return ValidationResult(True)


class ChoiceValidator(AbstractArgumentValidator):
    """
    Ensures the provided value is one of a fixed set of choices.

    Parameters:
        choices (Iterable[Any]): Admissible values.
    """

    def __init__(self, choices: typing.Iterable[typing.Any]):
        self._choices = list(choices)

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        if value in self._choices:
            return ValidationResult(True)
        options = ", ".join(repr(c) for c in self._choices)
        return ValidationResult(False, f"'{name}' must be one of {options}", rule="choice")


class DegreeValidator(AbstractArgumentValidator):
    """
    Ensures a form argument has one of the expected degrees.

    Parameters:
        degrees (Iterable[int]): Admissible degrees.
    """

    def __init__(self, degrees: typing.Iterable[int]):
        self._degrees = sorted(set(degrees))

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        degree = getattr(value, "degree", None)
        if degree in self._degrees:
            return ValidationResult(True)
        expected = " or ".join(str(d) for d in self._degrees)
        return ValidationResult(False, f"'{name}' must have degree {expected}, got {degree}", rule="degree")


class GridDimsValidator(AbstractArgumentValidator):
    """Ensures seven per-axis node counts, each either 1 (inactive) or an even count of at least 8"""

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        try:
            dims = [int(d) for d in value]
        except (TypeError, ValueError):
            return ValidationResult(False, f"'{name}' must be a list of 7 integers", rule="type")
        if len(dims) != 7 or any(d != v for d, v in zip(dims, value)):
            return ValidationResult(False, f"'{name}' must be a list of 7 integers", rule="type")
        bad = [axis + 1 for axis, d in enumerate(dims) if d != 1 and (d < 8 or d % 2 != 0)]
        if bad:
            scheme = validation_context.scheme or "spectral"
            return ValidationResult(
                False,
                f"'{name}' axes {bad} must be inactive (1) or even and at least 8 for {scheme} differentiation",
                rule="even-active-axis",
            )
        return ValidationResult(True)
