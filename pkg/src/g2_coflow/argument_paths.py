import re
import typing

_PATH = re.compile(r"^[a-zA-Z_][a-zA-Z_0-9]*(?:\[\])?(?:\.[a-zA-Z_][a-zA-Z_0-9]*(?:\[\])?)*$")


def is_valid_argument_path(path: str) -> bool:
    """
    Validates that an argument path is a dotted chain of Python identifiers

        Parameters
            path (str)
                Argument path, e.g. ``state.t`` or ``series[].t``
    """
    return _PATH.match(path) is not None


def validate_argument_paths(paths: typing.Iterable[str], parameters: typing.Collection[str]) -> None:
    """
    Validates argument paths against the parameters of the decorated function

        Parameters
            paths (typing.Iterable[str])
                All argument paths that should be validated
            parameters (typing.Collection[str])
                Parameter names of the decorated function
        Raises
            ValueError: when a path is malformed or does not start at a parameter
    """
    for path in paths:
        if not is_valid_argument_path(path):
            raise ValueError(
                f"Argument path {path} is not a dotted chain of identifiers, "
                f"each part may be appended with '[]' to validate every element of a sequence."
            )
        root = path.split(".")[0].rstrip("[]")
        if root not in parameters:
            raise ValueError(f"Argument path {path} does not start at a parameter of the decorated function")
