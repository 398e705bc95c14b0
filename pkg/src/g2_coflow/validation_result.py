import typing
from dataclasses import dataclass


@dataclass
class ValidationResult:
    """
    Outcome of checking one argument (or one configuration key) against a validator.
    """

    valid: bool
    """Whether the value satisfied the validator."""

    invalid_reason: typing.Optional[str] = None
    """Human readable rule that was violated. ``None`` if valid."""

    rule: typing.Optional[str] = None
    """Short name of the violated rule (``positive``, ``finite``, ...), used in error context."""
