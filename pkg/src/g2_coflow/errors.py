import typing


class CoflowError(Exception):
    """
    Base class for every error raised by g2_coflow
    """


class InvalidArgument(CoflowError, ValueError):
    """
    One or more arguments of a public operation violated their declared constraints.

        Parameters:
            message (str): Joined reasons of all violations
            violations (List[Tuple[str, str]]): (argument path, reason) pairs
    """

    def __init__(self, message: str, violations: typing.Optional[typing.List[typing.Tuple[str, str]]] = None):
        super().__init__(message)
        self.violations = violations or []


class NotPositive(CoflowError, ValueError):
    """A 3-form (or the 4-form it should come from) lies outside the open positive cone."""

    def __init__(
        self,
        message: str,
        node: typing.Optional[typing.Tuple[int, ...]] = None,
        safe_amplitude: typing.Optional[float] = None,
    ):
        super().__init__(message)
        self.node = node
        self.safe_amplitude = safe_amplitude


class NoConvergence(CoflowError, RuntimeError):
    """Recovering phi from psi did not converge."""

    def __init__(self, message: str, node: typing.Optional[typing.Tuple[int, ...]] = None, iterations: int = 0):
        super().__init__(message)
        self.node = node
        self.iterations = iterations


class SingularMetric(CoflowError, ValueError):
    """A metric field has a node with det g <= 1e-12."""

    def __init__(self, message: str, node: typing.Optional[typing.Tuple[int, ...]] = None):
        super().__init__(message)
        self.node = node


class NonFiniteField(CoflowError, ValueError):
    """A field contains NaN or infinite values."""


class NotCoclosed(CoflowError, ValueError):
    """The 4-form is not closed to within the configured threshold."""

    def __init__(self, message: str, residual: float = 0.0, threshold: float = 0.0):
        super().__init__(message)
        self.residual = residual
        self.threshold = threshold


class StabilityViolation(CoflowError, RuntimeError):
    """
    A time step produced NaN, left the positive cone or broke coclosedness.

    The partial trajectory, when available, is attached as ``trajectory``.
    """

    def __init__(self, message: str, step_index: int = 0, trajectory: typing.Any = None):
        super().__init__(message)
        self.step_index = step_index
        self.trajectory = trajectory


class ResourceLimit(CoflowError, MemoryError):
    """A dense tensor would exceed the configured element budget."""


class InsufficientData(CoflowError, ValueError):
    """Not enough usable sequence entries for a fit."""


class InsufficientTrajectory(CoflowError, ValueError):
    """Fewer than three stored snapshots."""


class ParseError(CoflowError, ValueError):
    """The run configuration text could not be parsed."""

    def __init__(self, message: str, line: typing.Optional[int] = None, key: typing.Optional[str] = None):
        super().__init__(message)
        self.line = line
        self.key = key


class ValidationError(CoflowError, ValueError):
    """The run configuration parsed but violates one or more rules."""

    def __init__(self, message: str, violations: typing.Optional[typing.List[typing.Tuple[str, str]]] = None):
        super().__init__(message)
        self.violations = violations or []


class ChecksumMismatch(CoflowError, ValueError):
    """A checkpoint is truncated or corrupted."""


class VersionMismatch(CoflowError, ValueError):
    """A checkpoint was written with an unsupported format version."""
