"""
Initial 4-forms for coflow runs.
"""
import logging
import math
import typing

import numpy as np

from . import exterior
from .argument_validators import RangeValidator
from .errors import CoflowError
from .errors import InvalidArgument
from .errors import NotPositive
from .exterior_calculus import exterior_derivative
from .fields import FormField
from .fields import Grid
from .g2_algebra import solve_phi
from .g2_algebra import standard_structure
from .validate_args_decorator import validate_args

logger = logging.getLogger(__name__)


def flat_psi(grid: Grid) -> FormField:
    """The constant field ψ0."""
    return FormField.constant(grid, 4, standard_structure()[1].components)


def _check_modes(grid: Grid, modes: typing.Sequence[int], axes: typing.Sequence[int]) -> None:
    for axis in axes:
        if grid.dims[axis] == 1:
            raise InvalidArgument(f"perturbation axis {axis + 1} is inactive on grid {grid.dims}")
        for mode in modes:
            if not 0 < mode < grid.dims[axis] // 2:
                raise InvalidArgument(f"mode {mode} is not resolved below Nyquist on axis {axis + 1}")


def exact_perturbation(
    grid: Grid, modes: typing.Sequence[int], seed: int, axes: typing.Sequence[int], scheme: typing.Optional[str] = None
) -> FormField:
    """
    dβ for a seeded band-limited random 3-form β on the given 0-based axes, scaled to ‖dβ‖∞ = 1
    """
    _check_modes(grid, modes, axes)
    rng = np.random.default_rng(seed)
    beta = np.zeros(grid.dims + (exterior.n_components(3),))
    for axis in axes:
        x = grid.coordinate(axis)[..., None]
        wavenumber = 2.0 * math.pi / grid.lengths[axis]
        for mode in modes:
            cosine = rng.standard_normal(exterior.n_components(3))
            sine = rng.standard_normal(exterior.n_components(3))
            beta = beta + cosine * np.cos(mode * wavenumber * x) + sine * np.sin(mode * wavenumber * x)
    d_beta = exterior_derivative(FormField(grid, 3, beta), scheme)
    size = d_beta.max_abs()
    if size == 0.0:
        return d_beta
    return d_beta * (1.0 / size)


def is_recoverable(psi: FormField) -> bool:
    """Whether φ can be recovered from ψ at every node, starting from φ0."""
    try:
        solve_phi(psi.components, standard_structure()[0].components)
    except CoflowError:
        return False
    return True


def safe_amplitude(direction: FormField, upper: float, rtol: float = 1e-3) -> float:
    """
    Largest amplitude a ≤ upper, to relative tolerance rtol, with ψ0 + a·direction recoverable
    """
    base = flat_psi(direction.grid)
    low, high = 0.0, upper
    while high - low > rtol * high:
        middle = 0.5 * (low + high)
        if is_recoverable(base + middle * direction):
            low = middle
        else:
            high = middle
    return low


@validate_args(
    non_negative=["amplitude"],
    validators={"seed": RangeValidator(lower=0, integer=True)},
)
def perturbation_psi(
    grid: Grid,
    amplitude: float,
    modes: typing.Sequence[int],
    seed: int,
    axes: typing.Sequence[int],
    scheme: typing.Optional[str] = None,
) -> FormField:
    """
    ψ0 + dβ with ‖dβ‖∞ = amplitude; closed by construction

        Raises:
            NotPositive: φ cannot be recovered at some node; carries the largest safe amplitude
    """
    direction = exact_perturbation(grid, modes, seed, axes, scheme)
    psi = flat_psi(grid) + amplitude * direction
    if not is_recoverable(psi):
        safe = safe_amplitude(direction, amplitude)
        raise NotPositive(
            f"amplitude {amplitude:g} leaves the positive cone; the largest safe amplitude is about {safe:.4g}",
            safe_amplitude=safe,
        )
    logger.debug("perturbation with amplitude %g, modes %s, seed %d on axes %s", amplitude, list(modes), seed, list(axes))
    return psi


def reparametrized_flat_psi(grid: Grid, amplitude: float, mode: int = 1) -> FormField:
    """
    ψ0 + u(x1) e¹∧(∂1⌟ψ0) with u = amplitude·sin(mode·x1): the pullback of ψ0 by a periodic
    reparametrisation of the first axis, hence flat and torsion free
    """
    _, psi0 = standard_structure()
    contracted = exterior.interior(np.eye(7)[0], psi0.components, 4)
    rotated = exterior.wedge(np.eye(7)[0], 1, contracted, 3)
    u = amplitude * np.sin(mode * 2.0 * math.pi / grid.lengths[0] * grid.coordinate(0))[..., None]
    return flat_psi(grid) + FormField(grid, 4, np.broadcast_to(u * rotated, grid.dims + (35,)).copy())
