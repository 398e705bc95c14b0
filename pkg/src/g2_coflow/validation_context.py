import typing
from dataclasses import dataclass


@dataclass
class ValidationContext:
    """
    Extra information available to validators while a value is checked.
    """

    scheme: typing.Optional[str] = None
    """Derivative scheme the value will be used with, when known."""

    config_section: typing.Optional[str] = None
    """Section of the run configuration the value comes from; ``None`` for function arguments."""
