"""
Tensor fields on a periodic lattice over the flat 7-torus.

Field data is stored node-major: a rank-r field on a grid with ``dims`` has shape ``dims + (7,)*r`` and a
p-form field has shape ``dims + (C(7, p),)``. Axes with a single node are inactive: fields are constant
along them and every derivative in that direction is zero.
"""
import logging
import math
import string
import typing
from dataclasses import dataclass
from dataclasses import field

import numpy as np
import scipy.fft

from . import exterior
from .argument_validators import ChoiceValidator
from .argument_validators import GridDimsValidator
from .argument_validators import RangeValidator
from .errors import InvalidArgument
from .errors import NonFiniteField
from .errors import ResourceLimit
from .errors import SingularMetric
from .lab_config import LabConfig
from .validate_args_decorator import validate_args
from .validation_context import ValidationContext

logger = logging.getLogger(__name__)

SCHEMES = ("spectral", "fd4")
_LETTERS = string.ascii_lowercase[:20]


@dataclass(frozen=True)
class Grid:
    """
    Uniform periodic lattice with per-axis node counts and periods.
    """

    dims: typing.Tuple[int, ...]
    """Node count per axis; 1 marks an inactive axis."""

    lengths: typing.Tuple[float, ...] = (2.0 * math.pi,) * 7
    """Period per axis."""

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "lengths", tuple(float(length) for length in self.lengths))
        result = GridDimsValidator().check("dims", self.dims, ValidationContext())
        if not result.valid:
            raise InvalidArgument(result.invalid_reason or "invalid grid", violations=[("dims", result.invalid_reason or "")])
        if len(self.lengths) != 7 or any(not length > 0 for length in self.lengths):
            raise InvalidArgument("'lengths' must be 7 positive periods", violations=[("lengths", "positive")])

    @property
    def spacing(self) -> typing.Tuple[float, ...]:
        return tuple(length / n for length, n in zip(self.lengths, self.dims))

    @property
    def active_axes(self) -> typing.Tuple[int, ...]:
        return tuple(axis for axis, n in enumerate(self.dims) if n > 1)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def min_spacing(self) -> float:
        active = [self.spacing[a] for a in self.active_axes]
        return min(active) if active else min(self.lengths)

    def coordinate(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis, shaped to broadcast against ``dims``."""
        shape = [1] * 7
        shape[axis] = self.dims[axis]
        return (np.arange(self.dims[axis]) * self.spacing[axis]).reshape(shape)

    def with_dims(self, dims: typing.Sequence[int]) -> "Grid":
        return Grid(tuple(dims), self.lengths)


def _check_shape(grid: Grid, data: np.ndarray, tail: typing.Tuple[int, ...], what: str) -> None:
    if data.shape != grid.dims + tail:
        raise InvalidArgument(f"{what} data must have shape {grid.dims + tail}, got {data.shape}")
    if not np.all(np.isfinite(data)):
        raise NonFiniteField(f"{what} data contains NaN or infinite values")


def _broadcast(data: np.ndarray, source: Grid, target: Grid) -> np.ndarray:
    if source.lengths != target.lengths or any(s not in (1, t) for s, t in zip(source.dims, target.dims)):
        raise InvalidArgument(f"cannot broadcast grid {source.dims} to {target.dims}")
    return np.array(np.broadcast_to(data, target.dims + data.shape[7:]))


def _restrict(data: np.ndarray, source: Grid, target: Grid) -> np.ndarray:
    if source.lengths != target.lengths or any(t not in (1, s) for s, t in zip(source.dims, target.dims)):
        raise InvalidArgument(f"cannot restrict grid {source.dims} to {target.dims}")
    index = tuple(slice(0, 1) if t == 1 else slice(None) for t in target.dims)
    return np.array(data[index])


@dataclass(frozen=True, eq=False)
class TensorField:
    """
    A rank-r tensor at every node; ``variance[s]`` is True for a covariant (lower) slot.
    """

    grid: Grid
    data: np.ndarray
    variance: typing.Tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "variance", tuple(bool(v) for v in self.variance))
        _check_shape(self.grid, data, (7,) * len(self.variance), f"rank-{len(self.variance)} field")

    @property
    def rank(self) -> int:
        return len(self.variance)

    @classmethod
    def covariant(cls, grid: Grid, data: np.ndarray) -> "TensorField":
        return cls(grid, data, (True,) * (np.ndim(data) - 7))

    @classmethod
    def constant(cls, grid: Grid, value: np.ndarray, variance: typing.Sequence[bool]) -> "TensorField":
        value = np.asarray(value, dtype=float)
        return cls(grid, np.array(np.broadcast_to(value, grid.dims + value.shape)), tuple(variance))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data))) if self.data.size else 0.0

    def broadcast_to(self, grid: Grid) -> "TensorField":
        return TensorField(grid, _broadcast(self.data, self.grid, grid), self.variance)

    def restrict_to(self, grid: Grid) -> "TensorField":
        return TensorField(grid, _restrict(self.data, self.grid, grid), self.variance)


@dataclass(frozen=True, eq=False)
class FormField:
    """
    A p-form at every node in component storage, shape ``dims + (C(7, p),)``.
    """

    grid: Grid
    degree: int
    components: np.ndarray

    def __post_init__(self) -> None:
        components = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", components)
        _check_shape(self.grid, components, (exterior.n_components(self.degree),), f"{self.degree}-form")

    @classmethod
    def constant(cls, grid: Grid, degree: int, components: np.ndarray) -> "FormField":
        components = np.asarray(components, dtype=float)
        return cls(grid, degree, np.array(np.broadcast_to(components, grid.dims + components.shape)))

    @classmethod
    def zeros(cls, grid: Grid, degree: int) -> "FormField":
        return cls(grid, degree, np.zeros(grid.dims + (exterior.n_components(degree),)))

    @classmethod
    def from_tensor(cls, f: TensorField) -> "FormField":
        return cls(f.grid, f.rank, exterior.antisymmetrize(f.data, f.rank))

    def to_tensor(self) -> TensorField:
        return TensorField(self.grid, exterior.to_tensor(self.components, self.degree), (True,) * self.degree)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components)))

    def broadcast_to(self, grid: Grid) -> "FormField":
        return FormField(grid, self.degree, _broadcast(self.components, self.grid, grid))

    def restrict_to(self, grid: Grid) -> "FormField":
        return FormField(grid, self.degree, _restrict(self.components, self.grid, grid))

    def __add__(self, other: "FormField") -> "FormField":
        return FormField(self.grid, self.degree, self.components + other.components)

    def __sub__(self, other: "FormField") -> "FormField":
        return FormField(self.grid, self.degree, self.components - other.components)

    def __mul__(self, scalar: float) -> "FormField":
        return FormField(self.grid, self.degree, scalar * self.components)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class MetricField:
    """
    Metric at every node with cached inverse, determinant and √det g.
    """

    grid: Grid
    g: np.ndarray
    g_inv: np.ndarray = field(repr=False)
    det_g: np.ndarray = field(repr=False)
    vol: np.ndarray = field(repr=False)

    @classmethod
    def from_components(cls, grid: Grid, g: np.ndarray) -> "MetricField":
        """
        Raises:
            SingularMetric: at the first node with det g ≤ 1e-12
        """
        g = np.asarray(g, dtype=float)
        _check_shape(grid, g, (7, 7), "metric")
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        det_g = np.linalg.det(g)
        bad = det_g <= 1e-12
        if np.any(bad):
            node = tuple(int(i) for i in np.argwhere(bad)[0])
            raise SingularMetric(f"metric is singular at node {node} (det g = {float(det_g[node]):.3e})", node=node)
        return cls(grid, g, np.linalg.inv(g), det_g, np.sqrt(det_g))

    @classmethod
    def flat(cls, grid: Grid) -> "MetricField":
        return cls.from_components(grid, np.broadcast_to(np.eye(7), grid.dims + (7, 7)))

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.g)[..., 0]))

    def as_tensor(self) -> TensorField:
        return TensorField(self.grid, self.g, (True, True))


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """
    Christoffel symbols stored as ``christoffel[..., l, i, j]`` = Γ^l_ij.
    """

    grid: Grid
    christoffel: np.ndarray

    def __post_init__(self) -> None:
        _check_shape(self.grid, np.asarray(self.christoffel), (7, 7, 7), "connection")

    @classmethod
    def flat(cls, grid: Grid) -> "ConnectionField":
        return cls(grid, np.zeros(grid.dims + (7, 7, 7)))

    def as_tensor(self) -> TensorField:
        return TensorField(self.grid, self.christoffel, (False, True, True))

    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.christoffel - np.swapaxes(self.christoffel, -1, -2))))


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """
    Riemann tensor in both index positions, Ricci tensor and scalar curvature.
    """

    riemann_up: TensorField
    """R_ijk^l, slots (i, j, k, l)."""

    riemann: TensorField
    """R_ijkl = g_lm R_ijk^m."""

    ricci: TensorField
    """R_jk = R_ijk^i."""

    scalar: TensorField

    def symmetry_residuals(self) -> typing.Dict[str, float]:
        """Max-abs residuals of the algebraic curvature identities."""
        rm = self.riemann.data
        return {
            "antisymmetry_ij": float(np.max(np.abs(rm + np.swapaxes(rm, -4, -3)))),
            "antisymmetry_kl": float(np.max(np.abs(rm + np.swapaxes(rm, -2, -1)))),
            "pair_symmetry": float(np.max(np.abs(rm - np.einsum("...ijkl->...klij", rm)))),
            "first_bianchi": float(
                np.max(np.abs(rm + np.einsum("...jkil->...ijkl", rm) + np.einsum("...kijl->...ijkl", rm)))
            ),
        }


def _scheme(scheme: typing.Optional[str]) -> str:
    return LabConfig.default_scheme() if scheme is None else scheme


def differentiate(data: np.ndarray, grid: Grid, axis: int, scheme: typing.Optional[str] = None) -> np.ndarray:
    """
    Componentwise ∂/∂x^axis of node-major data; zero along inactive axes
    """
    n = grid.dims[axis]
    if n == 1:
        return np.zeros_like(data)
    if _scheme(scheme) == "fd4":
        h = grid.spacing[axis]
        return (
            -np.roll(data, -2, axis=axis) + 8.0 * np.roll(data, -1, axis=axis)
            - 8.0 * np.roll(data, 1, axis=axis) + np.roll(data, 2, axis=axis)
        ) / (12.0 * h)
    wavenumbers = 2.0 * math.pi / grid.lengths[axis] * scipy.fft.rfftfreq(n, d=1.0 / n)
    multiplier = 1j * wavenumbers
    if n % 2 == 0:
        multiplier[-1] = 0.0
    shape = [1] * data.ndim
    shape[axis] = multiplier.size
    spectrum = scipy.fft.rfft(data, axis=axis)
    return scipy.fft.irfft(spectrum * multiplier.reshape(shape), n=n, axis=axis)


def gradient(data: np.ndarray, grid: Grid, scheme: typing.Optional[str] = None) -> np.ndarray:
    """All seven partials, the new derivative index inserted right after the grid axes."""
    out = np.zeros(data.shape[:7] + (7,) + data.shape[7:])
    for axis in grid.active_axes:
        out[(slice(None),) * 7 + (axis,)] = differentiate(data, grid, axis, scheme)
    return out


@validate_args(
    validators={"axis": RangeValidator(0, 6, integer=True)},
    optional_validators={"scheme": ChoiceValidator(SCHEMES)},
)
def partial_derivative(f: TensorField, axis: int, scheme: typing.Optional[str] = None) -> TensorField:
    """
    ∂f/∂x^axis (0-based axis); the zero field along an inactive axis
    """
    return TensorField(f.grid, differentiate(f.data, f.grid, axis, scheme), f.variance)


def noise_floor_ratio(data: np.ndarray, grid: Grid) -> float:
    """Share of spectral energy above 2/3 of the Nyquist wavenumber on any active axis."""
    active = grid.active_axes
    if not active:
        return 0.0
    power = np.abs(scipy.fft.fftn(data, axes=active)) ** 2
    power = power.reshape(grid.dims + (-1,)).sum(axis=-1)
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    high = np.zeros(grid.dims, dtype=bool)
    for axis in active:
        n = grid.dims[axis]
        index = np.abs(scipy.fft.fftfreq(n, d=1.0 / n))
        shape = [1] * 7
        shape[axis] = n
        high |= (index > (2.0 / 3.0) * (n / 2.0)).reshape(shape)
    return float(power[high].sum()) / total


def _check_budget(grid: Grid, rank: int) -> None:
    elements = grid.node_count * 7 ** rank
    if elements > LabConfig.max_tensor_elements():
        raise ResourceLimit(
            f"a rank-{rank} field on {grid.dims} needs {elements} elements, "
            f"over the budget of {LabConfig.max_tensor_elements()}"
        )


def covariant_gradient(
    data: np.ndarray,
    variance: typing.Sequence[bool],
    connection: ConnectionField,
    grid: Grid,
    scheme: typing.Optional[str] = None,
) -> np.ndarray:
    """
    ∇_m f with the new covariant index m first:
    ∂_m f − Σ Γ^p_{m i} f_{…p…} over lower slots + Σ Γ^j_{m p} f^{…p…} over upper slots
    """
    _check_budget(grid, len(variance) + 1)
    out = gradient(data, grid, scheme)
    gamma = connection.christoffel
    if not np.any(gamma):
        return out
    letters = _LETTERS[: len(variance)]
    for slot, covariant in enumerate(variance):
        replaced = letters[:slot] + "P" + letters[slot + 1:]
        if covariant:
            spec = f"...PM{letters[slot]},...{replaced}->...M{letters}"
            out -= np.einsum(spec, gamma, data, optimize=True)
        else:
            spec = f"...{letters[slot]}MP,...{replaced}->...M{letters}"
            out += np.einsum(spec, gamma, data, optimize=True)
    return out


def covariant_derivative(f: TensorField, connection: ConnectionField, scheme: typing.Optional[str] = None) -> TensorField:
    """
    ∇f, rank + 1, the derivative slot first

        Raises:
            ResourceLimit: when the result would exceed ``LabConfig.max_tensor_elements()``
    """
    data = covariant_gradient(f.data, f.variance, connection, f.grid, scheme)
    return TensorField(f.grid, data, (True,) + f.variance)


def hessian(f: TensorField, connection: ConnectionField, scheme: typing.Optional[str] = None) -> TensorField:
    """∇∇f with slots (a, b, …) holding ∇_a ∇_b f."""
    return covariant_derivative(covariant_derivative(f, connection, scheme), connection, scheme)


def trace_laplacian(
    f: TensorField, metric: MetricField, connection: ConnectionField, scheme: typing.Optional[str] = None
) -> TensorField:
    """△f = g^{ab} ∇_a ∇_b f."""
    second = hessian(f, connection, scheme)
    letters = _LETTERS[: f.rank]
    data = np.einsum(f"...ab,...ab{letters}->...{letters}", metric.g_inv, second.data, optimize=True)
    return TensorField(f.grid, data, f.variance)


def tensor_norm_squared(data: np.ndarray, variance: typing.Sequence[bool], metric: MetricField) -> np.ndarray:
    """Pointwise |f|²_g with every slot contracted by g⁻¹ (lower) or g (upper)."""
    letters = _LETTERS[: len(variance)]
    partner = data
    for slot, covariant in enumerate(variance):
        matrix = metric.g_inv if covariant else metric.g
        moved = letters[:slot] + "z" + letters[slot + 1:]
        partner = np.einsum(f"...{letters[slot]}z,...{moved}->...{letters}", matrix, partner, optimize=True)
    return np.einsum(f"...{letters},...{letters}->...", data, partner)


def field_norm(f: TensorField, metric: MetricField) -> np.ndarray:
    """Pointwise |f|_g."""
    return np.sqrt(np.maximum(tensor_norm_squared(f.data, f.variance, metric), 0.0))


def grid_inner_product(alpha: FormField, beta: FormField, metric: MetricField) -> float:
    """Σ ⟨α, β⟩_g √det g h1⋯h7 over all nodes."""
    pointwise = exterior.inner_product(alpha.components, beta.components, alpha.degree, metric.g_inv)
    return float(np.sum(pointwise * metric.vol)) * alpha.grid.cell_volume


@validate_args(optional_validators={"scheme": ChoiceValidator(SCHEMES)})
def levi_civita(metric: MetricField, scheme: typing.Optional[str] = None) -> ConnectionField:
    """
    Γ^l_ij = ½ g^{lm}(∂_i g_jm + ∂_j g_im − ∂_m g_ij)
    """
    if not metric.grid.active_axes:
        return ConnectionField.flat(metric.grid)
    dg = gradient(metric.g, metric.grid, scheme)
    combined = dg + np.swapaxes(dg, -3, -2) - np.moveaxis(dg, -3, -1)
    christoffel = 0.5 * np.einsum("...lm,...ijm->...lij", metric.g_inv, combined, optimize=True)
    christoffel = 0.5 * (christoffel + np.swapaxes(christoffel, -1, -2))
    return ConnectionField(metric.grid, christoffel)


@validate_args(optional_validators={"scheme": ChoiceValidator(SCHEMES)})
def riemann(metric: MetricField, connection: ConnectionField, scheme: typing.Optional[str] = None) -> CurvatureField:
    """
    R_ijk^l = ∂_i Γ^l_jk − ∂_j Γ^l_ik + Γ^l_ip Γ^p_jk − Γ^l_jp Γ^p_ik, lowered with g_lm
    """
    grid = metric.grid
    gamma = connection.christoffel
    derivative = np.einsum("...iljk->...ijkl", gradient(gamma, grid, scheme))
    quadratic = np.einsum("...lip,...pjk->...ijkl", gamma, gamma, optimize=True)
    up = derivative + quadratic
    up = up - np.swapaxes(up, -4, -3)
    down = np.einsum("...ijkm,...ml->...ijkl", up, metric.g, optimize=True)
    ricci = np.einsum("...ijki->...jk", up)
    scalar = np.einsum("...jk,...jk->...", metric.g_inv, ricci)
    return CurvatureField(
        riemann_up=TensorField(grid, up, (True, True, True, False)),
        riemann=TensorField.covariant(grid, down),
        ricci=TensorField.covariant(grid, ricci),
        scalar=TensorField(grid, scalar, ()),
    )


@dataclass
class IteratedNorms:
    """
    Norms of ∇^k f for k = 0..kmax. Entries that could not be computed are ``nan`` and flagged unavailable.
    """

    sup: typing.List[float]
    """‖∇^k f‖∞ with every index contracted by the metric."""

    l2: typing.List[float]
    """(Σ |∇^k f|² √det g h1⋯h7)^{1/2}."""

    noise_floor: typing.List[bool]
    """Whether spectral energy above 2/3 Nyquist exceeded ``LabConfig.noise_floor_ratio()``."""

    unavailable: typing.List[bool]
    """Whether the level was over the dense storage budget."""

    pointwise: typing.List[typing.Optional[np.ndarray]] = field(default_factory=list)
    """Pointwise |∇^k f|², ``None`` where unavailable."""


def iterated_derivatives(
    f: TensorField, connection: ConnectionField, kmax: int, scheme: typing.Optional[str] = None
) -> typing.Iterator[typing.Optional[TensorField]]:
    """Yields ∇^k f for k = 0..kmax, then ``None`` for levels over the storage budget."""
    current: typing.Optional[TensorField] = f
    for k in range(kmax + 1):
        if k > 0 and current is not None:
            try:
                current = covariant_derivative(current, connection, scheme)
            except ResourceLimit as error:
                logger.warning("∇^%d skipped: %s", k, error)
                current = None
        yield current


@validate_args(
    validators={"kmax": RangeValidator(0, 6, integer=True)},
    optional_validators={"scheme": ChoiceValidator(SCHEMES)},
)
def iterated_norms(
    f: TensorField,
    metric: MetricField,
    connection: ConnectionField,
    kmax: int,
    scheme: typing.Optional[str] = None,
) -> IteratedNorms:
    """
    Sup and L² norms of ∇^k f, k = 0..kmax (kmax ≤ 6)
    """
    result = IteratedNorms([], [], [], [])
    ratio = LabConfig.noise_floor_ratio()
    for level in iterated_derivatives(f, connection, kmax, scheme):
        if level is None:
            result.sup.append(math.nan)
            result.l2.append(math.nan)
            result.noise_floor.append(False)
            result.unavailable.append(True)
            result.pointwise.append(None)
            continue
        squared = np.maximum(tensor_norm_squared(level.data, level.variance, metric), 0.0)
        result.sup.append(math.sqrt(float(np.max(squared))))
        result.l2.append(math.sqrt(float(np.sum(squared * metric.vol)) * f.grid.cell_volume))
        flagged = noise_floor_ratio(level.data, f.grid) > ratio
        if flagged:
            logger.warning("∇^%d of a rank-%d field is above the noise floor", level.rank - f.rank, f.rank)
        result.noise_floor.append(flagged)
        result.unavailable.append(False)
        result.pointwise.append(squared)
    return result
