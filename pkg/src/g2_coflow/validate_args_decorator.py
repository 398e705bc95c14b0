import functools
import inspect
import itertools
from dataclasses import dataclass
from typing import Any
from typing import Callable
from typing import Dict
from typing import List
from typing import Optional
from typing import TypeVar

from .argument_paths import validate_argument_paths
from .argument_validators import AbstractArgumentValidator
from .argument_validators import FiniteValidator
from .argument_validators import NonNegativeValidator
from .argument_validators import PositiveValidator
from .errors import InvalidArgument
from .validation_context import ValidationContext


@dataclass
class _ArgumentViolation:
    argument_path: str
    reason: str


def _none_or_empty(x: Any) -> bool:
    return x is None or len(x) == 0


R = TypeVar("R")


def validate_args(
    finite: Optional[List[str]] = None,
    positive: Optional[List[str]] = None,
    non_negative: Optional[List[str]] = None,
    validators: Optional[Dict[str, AbstractArgumentValidator]] = None,
    optional_validators: Optional[Dict[str, AbstractArgumentValidator]] = None,
) -> Callable[[Callable[..., R]], Callable[..., R]]:
    """
    Decorator to validate the arguments of a public numerical operation.

    Attributes of arguments can be reached with a `.`, e.g. `state.t` validates the attribute `t` of the
    argument `state`. Appending `[]` to a part validates every element of a sequence, e.g. `series[].t`.

    All violations are collected before raising, so a single call reports every bad argument.

        Parameters:
            finite (Optional[List[str]]):
                Arguments that must hold no NaN or infinite values (numbers, arrays, forms and fields)
            positive (Optional[List[str]]):
                Arguments that must be strictly positive numbers
            non_negative (Optional[List[str]]):
                Arguments that must be zero or positive numbers
            validators (Optional[Dict[str, AbstractArgumentValidator]]):
                Dict mapping argument paths to validators
            optional_validators (Optional[Dict[str, AbstractArgumentValidator]]):
                Dict mapping argument paths to validators, the arguments can be None or validated using the
                specified validator

        Returns:
            decorating_function (func): the decorating function wrapping the operation

        Raises:
            InvalidArgument: at call time, listing every violated rule
    """
    if all(_none_or_empty(arg) for arg in locals().values()):
        raise ValueError("Should provide at least one argument to validate")

    finite_value = finite or []
    positive_value = positive or []
    non_negative_value = non_negative or []
    validators_value = validators or dict()
    optional_validators_value = optional_validators or dict()

    if set(validators_value).intersection(optional_validators_value):
        raise ValueError("Overlap in mandatory and optional arguments")

    argument_paths = list(
        dict.fromkeys(
            itertools.chain(
                finite_value,
                positive_value,
                non_negative_value,
                validators_value.keys(),
                optional_validators_value.keys(),
            )
        )
    )

    def decorating_function(func: Callable[..., R]) -> Callable[..., R]:
        signature = inspect.signature(func)
        validate_argument_paths(argument_paths, signature.parameters.keys())

        def validate_arguments(arguments: Dict[str, Any]) -> None:
            scheme = arguments.get("scheme")
            validation_context = ValidationContext(scheme=scheme if isinstance(scheme, str) else None)
            violations: List[_ArgumentViolation] = []
            for path in argument_paths:
                path_validators: List[AbstractArgumentValidator] = []
                if path in finite_value:
                    path_validators.append(FiniteValidator())
                if path in positive_value:
                    path_validators.append(PositiveValidator())
                if path in non_negative_value:
                    path_validators.append(NonNegativeValidator())
                validator = {**validators_value, **optional_validators_value}.get(path)
                if validator is not None:
                    path_validators.append(validator)
                root, *rest = path.split(".")
                violations.extend(
                    _recurse_validate(
                        arguments.get(root.rstrip("[]")),
                        parts=[root, *rest],
                        validators=path_validators,
                        is_optional=path in optional_validators_value,
                        validation_context=validation_context,
                    )
                )
            if len(violations) > 0:
                raise InvalidArgument(
                    ", ".join([v.reason for v in violations])[:1000],
                    violations=[(v.argument_path, v.reason) for v in violations],
                )

        @functools.wraps(func)
        def validate_wrapper(*args: Any, **kwargs: Any) -> R:
            bound = signature.bind(*args, **kwargs)
            bound.apply_defaults()
            validate_arguments(dict(bound.arguments))
            return func(*args, **kwargs)

        return validate_wrapper

    return decorating_function


def _recurse_validate(
    value: Any,
    parts: List[str],
    validation_context: ValidationContext,
    validators: List[AbstractArgumentValidator],
    leading_parts_name: Optional[str] = None,
    is_optional: bool = False,
) -> List[_ArgumentViolation]:
    part_raw, *remaining = parts
    part = part_raw.rstrip("[]")
    full_name = part if leading_parts_name is None else f"{leading_parts_name}.{part}"

    if value is None:
        if is_optional:
            return []
        return [_ArgumentViolation(argument_path=full_name, reason=f"must have '{full_name}'")]

    elements = list(enumerate(value)) if part_raw.endswith("[]") else [(None, value)]
    violations: List[_ArgumentViolation] = []
    for index, element in elements:
        element_name = full_name if index is None else f"{full_name}[{index}]"
        if remaining:
            child = remaining[0].rstrip("[]")
            violations.extend(
                _recurse_validate(
                    getattr(element, child, None),
                    parts=remaining,
                    leading_parts_name=element_name,
                    validators=validators,
                    is_optional=is_optional,
                    validation_context=validation_context,
                )
            )
            continue
        for v in validators:
            validation_result = v.check(element_name, element, validation_context)
            if not validation_result.valid:
                violations.append(
                    _ArgumentViolation(
                        argument_path=element_name,
                        reason="" if validation_result.invalid_reason is None else validation_result.invalid_reason,
                    )
                )
    return violations
