"""
Run configuration: TOML text with the sections [grid] [flow] [initial] [monitors] [output] [runtime].

Every accepted key is listed in ``KEY_TABLE`` together with its default and validator.
"""
import logging
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import typing
from dataclasses import asdict
from dataclasses import dataclass

from .argument_validators import AbstractArgumentValidator
from .argument_validators import ChoiceValidator
from .argument_validators import GridDimsValidator
from .argument_validators import NonNegativeValidator
from .argument_validators import PositiveValidator
from .argument_validators import RangeValidator
from .coflow import INTEGRATORS
from .errors import NotCoclosed
from .errors import NotPositive
from .errors import ParseError
from .errors import ValidationError
from .fields import SCHEMES
from .fields import FormField
from .fields import Grid
from .initial_data import flat_psi
from .initial_data import is_recoverable
from .initial_data import perturbation_psi
from .initial_data import reparametrized_flat_psi
from .torsion import coclosed_residual
from .torsion import coclosed_threshold
from .validation_context import ValidationContext
from .validation_result import ValidationResult

logger = logging.getLogger(__name__)

RUN_ROUTES = ("direct", "velocity", "both")
INITIAL_KINDS = ("flat", "perturbation", "reparametrized")
MONITORS = ("shi", "fit", "evolution", "commutator")


class _SequenceValidator(AbstractArgumentValidator):
    """Applies an element validator to every entry of a non-empty list"""

    def __init__(self, element: AbstractArgumentValidator, length: typing.Optional[int] = None):
        self._element = element
        self._length = length

    def check(self, name: str, value: typing.Any, validation_context: ValidationContext) -> ValidationResult:
        if not isinstance(value, list) or not value:
            return ValidationResult(False, f"'{name}' must be a non-empty list", rule="type")
        if self._length is not None and len(value) != self._length:
            return ValidationResult(False, f"'{name}' must hold {self._length} entries", rule="type")
        for index, element in enumerate(value):
            result = self._element.check(f"{name}[{index}]", element, validation_context)
            if not result.valid:
                return result
        return ValidationResult(True)


@dataclass(frozen=True)
class KeySpec:
    section: str
    key: str
    default: typing.Any
    validator: typing.Optional[AbstractArgumentValidator]
    required: bool = False
    doc: str = ""


KEY_TABLE: typing.Tuple[KeySpec, ...] = (
    KeySpec("grid", "dims", None, GridDimsValidator(), required=True, doc="nodes per axis; 1 marks an inactive axis"),
    KeySpec("grid", "lengths", [2.0 * math.pi] * 7, _SequenceValidator(PositiveValidator(), 7), doc="period of each axis"),
    KeySpec("flow", "t_end", None, NonNegativeValidator(), required=True, doc="final time"),
    KeySpec("flow", "A", 1.0, PositiveValidator(), doc="the constant A of the modified coflow"),
    KeySpec("flow", "scheme", "spectral", ChoiceValidator(SCHEMES), doc="derivative scheme"),
    KeySpec("flow", "route", "direct", ChoiceValidator(RUN_ROUTES), doc="right-hand side route"),
    KeySpec("flow", "integrator", "rk4", ChoiceValidator(INTEGRATORS), doc="time integrator"),
    KeySpec("flow", "c_cfl", 0.1, PositiveValidator(), doc="step safety factor"),
    KeySpec("flow", "dt", None, PositiveValidator(), doc="fixed step; overrides c_cfl when set"),
    KeySpec("initial", "kind", "flat", ChoiceValidator(INITIAL_KINDS), doc="initial 4-form"),
    KeySpec("initial", "amplitude", 0.0, NonNegativeValidator(), doc="sup norm of the exact perturbation"),
    KeySpec("initial", "modes", [1], _SequenceValidator(RangeValidator(1, integer=True)), doc="Fourier modes of β"),
    KeySpec("initial", "seed", None, RangeValidator(0, integer=True), doc="seed of β; required for perturbations"),
    KeySpec("initial", "axes", [1], _SequenceValidator(RangeValidator(1, 7, integer=True)), doc="1-based axes of β"),
    KeySpec("monitors", "names", ["shi", "fit"], _SequenceValidator(ChoiceValidator(MONITORS)), doc="monitors to run"),
    KeySpec("monitors", "kmax", 2, RangeValidator(0, 4, integer=True), doc="highest Shi index"),
    KeySpec("monitors", "every", 1, RangeValidator(1, integer=True), doc="steps between time-series rows"),
    KeySpec("output", "directory", ".", None, doc="directory of every output file"),
    KeySpec("output", "timeseries", "timeseries.csv", None, doc="time-series file name"),
    KeySpec("output", "report", "report.json", None, doc="report file name"),
    KeySpec("output", "checkpoint", "checkpoint.g2c", None, doc="checkpoint file name"),
    KeySpec("output", "checkpoint_every", 0, RangeValidator(0, integer=True), doc="steps between checkpoints; 0 never"),
    KeySpec("runtime", "workers", 1, RangeValidator(1, 64, integer=True), doc="monitor worker threads"),
    KeySpec("runtime", "max_tensor_elements", 60_000_000, RangeValidator(1, integer=True), doc="dense tensor budget"),
)


@dataclass(frozen=True)
class GridConfig:
    dims: typing.Tuple[int, ...]
    lengths: typing.Tuple[float, ...]

    def build(self) -> Grid:
        return Grid(self.dims, self.lengths)


@dataclass(frozen=True)
class FlowConfig:
    t_end: float
    A: float
    scheme: str
    route: str
    integrator: str
    c_cfl: float
    dt: typing.Optional[float]


@dataclass(frozen=True)
class InitialConfig:
    kind: str
    amplitude: float
    modes: typing.Tuple[int, ...]
    seed: typing.Optional[int]
    axes: typing.Tuple[int, ...]
    """1-based, as written in the configuration."""


@dataclass(frozen=True)
class MonitorConfig:
    names: typing.Tuple[str, ...]
    kmax: int
    every: int


@dataclass(frozen=True)
class OutputConfig:
    directory: str
    timeseries: str
    report: str
    checkpoint: str
    checkpoint_every: int


@dataclass(frozen=True)
class RuntimeConfig:
    workers: int
    max_tensor_elements: int


@dataclass(frozen=True)
class RunConfig:
    """
    A fully validated run configuration with every default applied.
    """

    grid: GridConfig
    flow: FlowConfig
    initial: InitialConfig
    monitors: MonitorConfig
    output: OutputConfig
    runtime: RuntimeConfig

    def as_dict(self) -> typing.Dict[str, typing.Dict[str, typing.Any]]:
        return asdict(self)


def _line_of(text: str, section: str, key: typing.Optional[str]) -> typing.Optional[int]:
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return number
    return None


def _parse_toml(text: str) -> typing.Dict[str, typing.Any]:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as error:
        match = re.search(r"line (\d+)", str(error))
        raise ParseError(f"invalid configuration text: {error}", line=int(match.group(1)) if match else None) from error


def _check_unknown(text: str, document: typing.Dict[str, typing.Any]) -> None:
    known: typing.Dict[str, typing.Set[str]] = {}
    for spec in KEY_TABLE:
        known.setdefault(spec.section, set()).add(spec.key)
    for section, table in document.items():
        if section not in known or not isinstance(table, dict):
            raise ParseError(f"unknown section [{section}]", line=_line_of(text, section, None), key=section)
        for key in table:
            if key not in known[section]:
                raise ParseError(
                    f"unknown key '{section}.{key}'", line=_line_of(text, section, key), key=f"{section}.{key}"
                )


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a run configuration

        Parameters:
            text (str): TOML configuration text

        Returns:
            config (RunConfig): configuration with all defaults applied

        Raises:
            ParseError: malformed TOML, unknown sections or unknown keys, with the line when known
            ValidationError: every violated rule, e.g. A ≤ 0 or an odd active axis
    """
    document = _parse_toml(text)
    _check_unknown(text, document)
    scheme = document.get("flow", {}).get("scheme", "spectral")
    values: typing.Dict[str, typing.Dict[str, typing.Any]] = {}
    violations: typing.List[typing.Tuple[str, str]] = []
    for spec in KEY_TABLE:
        table = document.get(spec.section, {})
        name = f"{spec.section}.{spec.key}"
        if spec.key not in table:
            if spec.required:
                violations.append((name, f"must have '{name}'"))
            values.setdefault(spec.section, {})[spec.key] = spec.default
            continue
        value = table[spec.key]
        if spec.validator is not None:
            context = ValidationContext(scheme=scheme if isinstance(scheme, str) else None, config_section=spec.section)
            result = spec.validator.check(name, value, context)
            if not result.valid:
                violations.append((name, result.invalid_reason or f"'{name}' is invalid"))
        values.setdefault(spec.section, {})[spec.key] = value

    initial = values["initial"]
    if initial["kind"] == "perturbation" and initial["seed"] is None:
        violations.append(("initial.seed", "'initial.seed' is required for perturbation data"))
    dims = values["grid"]["dims"]
    if not any(v[0] == "grid.dims" for v in violations) and dims is not None:
        for axis in initial["axes"] if isinstance(initial["axes"], list) else []:
            if isinstance(axis, int) and 1 <= axis <= 7 and dims[axis - 1] == 1 and initial["kind"] != "flat":
                violations.append(("initial.axes", f"'initial.axes' names inactive axis {axis}"))
    if violations:
        raise ValidationError(", ".join(reason for _, reason in violations)[:1000], violations=violations)

    grid, flow, monitors, output, runtime = (values[s] for s in ("grid", "flow", "monitors", "output", "runtime"))
    return RunConfig(
        grid=GridConfig(tuple(int(d) for d in grid["dims"]), tuple(float(x) for x in grid["lengths"])),
        flow=FlowConfig(
            t_end=float(flow["t_end"]),
            A=float(flow["A"]),
            scheme=flow["scheme"],
            route=flow["route"],
            integrator=flow["integrator"],
            c_cfl=float(flow["c_cfl"]),
            dt=None if flow["dt"] is None else float(flow["dt"]),
        ),
        initial=InitialConfig(
            kind=initial["kind"],
            amplitude=float(initial["amplitude"]),
            modes=tuple(initial["modes"]),
            seed=initial["seed"],
            axes=tuple(initial["axes"]),
        ),
        monitors=MonitorConfig(tuple(monitors["names"]), int(monitors["kmax"]), int(monitors["every"])),
        output=OutputConfig(
            directory=str(output["directory"]),
            timeseries=str(output["timeseries"]),
            report=str(output["report"]),
            checkpoint=str(output["checkpoint"]),
            checkpoint_every=int(output["checkpoint_every"]),
        ),
        runtime=RuntimeConfig(int(runtime["workers"]), int(runtime["max_tensor_elements"])),
    )


def build_initial(spec: InitialConfig, grid: Grid, scheme: typing.Optional[str] = None) -> FormField:
    """
    The initial ψ of a run, checked to be closed and recoverable at every node

        Raises:
            NotPositive: the perturbation leaves the positive cone; the message carries a safe amplitude
            NotCoclosed: the data is not closed to within the scheme's threshold
    """
    if spec.kind == "flat":
        psi = flat_psi(grid)
    elif spec.kind == "reparametrized":
        if grid.dims[0] == 1:
            raise ValidationError("reparametrized data needs an active first axis", [("grid.dims", "axis 1 inactive")])
        psi = reparametrized_flat_psi(grid, spec.amplitude, spec.modes[0])
    else:
        if spec.seed is None:
            raise ValidationError("'initial.seed' is required for perturbation data", [("initial.seed", "required")])
        psi = perturbation_psi(grid, spec.amplitude, spec.modes, spec.seed, [a - 1 for a in spec.axes], scheme)
    residual = coclosed_residual(psi, scheme)
    threshold = coclosed_threshold(psi, scheme)
    if residual > threshold:
        raise NotCoclosed(
            f"initial data has ‖dψ‖∞ = {residual:.3e} above {threshold:.3e}", residual=residual, threshold=threshold
        )
    if spec.kind == "reparametrized":
        if not is_recoverable(psi):
            raise NotPositive(f"reparametrisation amplitude {spec.amplitude:g} leaves the positive cone")
    logger.info("initial data '%s' on grid %s, ‖dψ‖∞ = %.3e", spec.kind, grid.dims, residual)
    return psi


def key_table_markdown() -> str:
    """The key table as a markdown table, as documented in the README."""
    rows = ["| key | default | description |", "| --- | --- | --- |"]
    for spec in KEY_TABLE:
        default = "required" if spec.required else ("unset" if spec.default is None else repr(spec.default))
        rows.append(f"| `{spec.section}.{spec.key}` | {default} | {spec.doc} |")
    return "\n".join(rows)

