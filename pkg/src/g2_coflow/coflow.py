"""
Time integration of the modified Laplacian coflow ∂tψ = Δψ + 2d((A − tr T)φ).

Two independent rates are available: the direct 4-form rate and the rate assembled from the velocity pair
(h, X). ψ is the evolved variable; φ, g, Γ, Rm and T are refreshed after every stage.
"""
import logging
import typing
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from . import exterior
from .argument_validators import ChoiceValidator
from .argument_validators import PositiveValidator
from .errors import CoflowError
from .errors import StabilityViolation
from .exterior_calculus import codifferential
from .exterior_calculus import exterior_derivative
from .fields import SCHEMES
from .fields import ConnectionField
from .fields import CurvatureField
from .fields import FormField
from .fields import MetricField
from .fields import TensorField
from .fields import gradient
from .fields import levi_civita
from .fields import riemann
from .g2_algebra import metric_arrays
from .g2_algebra import solve_phi
from .g2_algebra import standard_structure
from .lab_config import LabConfig
from .torsion import TorsionTensor
from .torsion import coclosed_residual
from .torsion import coclosed_threshold
from .torsion import full_torsion
from .validate_args_decorator import validate_args

logger = logging.getLogger(__name__)

ROUTES = ("direct", "velocity")
INTEGRATORS = ("euler", "rk4")


@dataclass(frozen=True, eq=False)
class GeometryCache:
    """
    Geometry derived from ψ: φ with ∗_{g(φ)}φ = ψ, its metric, connection, curvature and torsion.
    """

    psi: FormField
    phi: FormField
    metric: MetricField
    connection: ConnectionField
    curvature: CurvatureField
    torsion: TorsionTensor
    phi_evaluations: int = 0
    """Residual evaluations the φ recovery needed."""


@dataclass(frozen=True, eq=False)
class FlowState:
    """
    The evolving 4-form with its geometry cache.
    """

    psi: FormField
    t: float
    A: float
    cache: GeometryCache
    route: str = "direct"
    scheme: str = "spectral"
    step_index: int = 0


@dataclass(frozen=True, eq=False)
class FlowVelocity:
    """
    h_ij = −R_ij + ½ T^{km}T^{ln}φ_ikl φ_jmn + (2A − tr T) T_ij, X = ∇ tr T and the ψ rate they induce.
    """

    h: TensorField
    X: TensorField
    psi_rate: FormField


@dataclass
class FlowTrajectory:
    """
    Snapshots of a run. ``states`` holds every kept snapshot in time order.
    """

    states: typing.List[FlowState] = field(default_factory=list)
    completed: bool = False

    @property
    def times(self) -> typing.List[float]:
        return [s.t for s in self.states]

    @property
    def final(self) -> FlowState:
        return self.states[-1]


def _phi0_components() -> np.ndarray:
    return standard_structure()[0].components


@validate_args(optional_validators={"scheme": ChoiceValidator(SCHEMES)})
def refresh_geometry(
    psi: FormField,
    phi_guess: typing.Optional[FormField] = None,
    scheme: typing.Optional[str] = None,
) -> GeometryCache:
    """
    Recover φ nodewise (warm started from ``phi_guess``, φ0 if None) and rebuild g, Γ, Rm and T

        Raises:
            NoConvergence: at the first node where φ could not be recovered
    """
    guess = _phi0_components() if phi_guess is None else phi_guess.components
    phi_components, evaluations = solve_phi(psi.components, guess)
    g, _ = metric_arrays(phi_components)
    grid = psi.grid
    phi = FormField(grid, 3, phi_components)
    metric = MetricField.from_components(grid, g)
    connection = levi_civita(metric, scheme)
    curvature = riemann(metric, connection, scheme)
    torsion = full_torsion(phi, psi, metric, connection, scheme)
    return GeometryCache(psi, phi, metric, connection, curvature, torsion, evaluations)


@validate_args(
    positive=["A"],
    finite=["psi"],
    validators={"route": ChoiceValidator(ROUTES), "scheme": ChoiceValidator(SCHEMES)},
)
def initial_state(
    psi: FormField,
    A: float,
    route: str = "direct",
    scheme: str = "spectral",
    phi_guess: typing.Optional[FormField] = None,
    t: float = 0.0,
    step_index: int = 0,
) -> FlowState:
    return FlowState(psi, t, A, refresh_geometry(psi, phi_guess, scheme), route, scheme, step_index)


def _metric_velocity_h(cache: GeometryCache, A: float) -> np.ndarray:
    metric = cache.metric
    T = cache.torsion.T.data
    T_upper = np.einsum("...ka,...mb,...ab->...km", metric.g_inv, metric.g_inv, T, optimize=True)
    phi = cache.phi.to_tensor().data
    quadratic = 0.5 * np.einsum("...km,...ln,...ikl,...jmn->...ij", T_upper, T_upper, phi, phi, optimize=True)
    trace = cache.torsion.trace(metric)
    h = -cache.curvature.ricci.data + quadratic + (2.0 * A - trace)[..., None, None] * T
    return 0.5 * (h + np.swapaxes(h, -1, -2))


def diamond(h: np.ndarray, psi: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """
    Components of h⋄ψ, (h⋄ψ)_njkl = h_n^p ψ_pjkl + h_j^p ψ_npkl + h_k^p ψ_njpl + h_l^p ψ_njkp
    """
    mixed = np.einsum("...np,...pq->...nq", h, g_inv)
    full = exterior.to_tensor(psi, 4)
    total = np.einsum("...nq,...qjkl->...njkl", mixed, full, optimize=True)
    total = total + np.einsum("...jq,...nqkl->...njkl", mixed, full, optimize=True)
    total = total + np.einsum("...kq,...njql->...njkl", mixed, full, optimize=True)
    total = total + np.einsum("...lq,...njkq->...njkl", mixed, full, optimize=True)
    return exterior.from_tensor(total, 4)


def _velocity_from_cache(cache: GeometryCache, A: float, scheme: str) -> FlowVelocity:
    grid = cache.psi.grid
    h = _metric_velocity_h(cache, A)
    X = gradient(cache.torsion.trace(cache.metric), grid, scheme)
    rate = diamond(h, cache.psi.components, cache.metric.g_inv) - exterior.wedge(X, 1, cache.phi.components, 3)
    return FlowVelocity(
        h=TensorField.covariant(grid, h),
        X=TensorField.covariant(grid, X),
        psi_rate=FormField(grid, 4, rate),
    )


def _direct_rate(cache: GeometryCache, A: float, scheme: str) -> FormField:
    laplacian = exterior_derivative(codifferential(cache.psi, cache.metric, scheme), scheme)
    weight = A - cache.torsion.trace(cache.metric)
    weighted = FormField(cache.psi.grid, 3, weight[..., None] * cache.phi.components)
    return laplacian + 2.0 * exterior_derivative(weighted, scheme)


def velocity(state: FlowState) -> FlowVelocity:
    """
    The velocity pair (h, X) and ∂tψ = h⋄ψ − X∧φ of the current state
    """
    return _velocity_from_cache(state.cache, state.A, state.scheme)


def psi_rate_direct(state: FlowState) -> FormField:
    """
    dδψ + 2d((A − tr T)φ), an exact form
    """
    return _direct_rate(state.cache, state.A, state.scheme)


def metric_velocity(state: FlowState) -> TensorField:
    """∂t g = 2h."""
    return TensorField.covariant(state.psi.grid, 2.0 * _metric_velocity_h(state.cache, state.A))


def route_discrepancy(state: FlowState) -> float:
    """‖psi_rate(velocity) − psi_rate(direct)‖∞ on the same state."""
    return (velocity(state).psi_rate - psi_rate_direct(state)).max_abs()


def _rate(cache: GeometryCache, A: float, route: str, scheme: str) -> FormField:
    if route == "velocity":
        return _velocity_from_cache(cache, A, scheme).psi_rate
    return _direct_rate(cache, A, scheme)


@validate_args(positive=["c_cfl"])
def stable_dt(state: FlowState, c_cfl: float = 0.1) -> float:
    """
    dt = c_cfl · h_min² / max(1, ‖h‖∞)
    """
    h = _metric_velocity_h(state.cache, state.A)
    scale = max(1.0, float(np.max(np.abs(h))))
    return c_cfl * state.psi.grid.min_spacing ** 2 / scale


@validate_args(positive=["dt"], validators={"integrator": ChoiceValidator(INTEGRATORS)})
def step(state: FlowState, dt: float, integrator: str = "rk4") -> FlowState:
    """
    Advance ψ by one step of the state's route and refresh the geometry

        Raises:
            StabilityViolation: NaN, loss of positivity or of coclosedness, with the offending step index
    """
    index = state.step_index + 1
    psi = state.psi
    try:
        first = _rate(state.cache, state.A, state.route, state.scheme)
        if integrator == "euler":
            advanced = psi + dt * first
            guess = state.cache.phi
        else:
            stage = refresh_geometry(psi + (0.5 * dt) * first, state.cache.phi, state.scheme)
            second = _rate(stage, state.A, state.route, state.scheme)
            stage = refresh_geometry(psi + (0.5 * dt) * second, stage.phi, state.scheme)
            third = _rate(stage, state.A, state.route, state.scheme)
            stage = refresh_geometry(psi + dt * third, stage.phi, state.scheme)
            fourth = _rate(stage, state.A, state.route, state.scheme)
            advanced = psi + (dt / 6.0) * (first + 2.0 * second + 2.0 * third + fourth)
            guess = stage.phi
        cache = refresh_geometry(advanced, guess, state.scheme)
    except CoflowError as error:
        raise StabilityViolation(f"step {index} at t = {state.t:.6g} failed: {error}", step_index=index) from error
    residual = coclosed_residual(advanced, state.scheme)
    threshold = max(coclosed_threshold(advanced, state.scheme), coclosed_residual(psi, state.scheme))
    if residual > threshold:
        raise StabilityViolation(
            f"step {index} at t = {state.t:.6g} broke coclosedness: ‖dψ‖∞ = {residual:.3e} > {threshold:.3e}",
            step_index=index,
        )
    if cache.metric.min_eigenvalue() <= LabConfig.positivity_floor():
        raise StabilityViolation(f"step {index} lost positivity of g", step_index=index)
    return FlowState(advanced, state.t + dt, state.A, cache, state.route, state.scheme, index)


@validate_args(
    non_negative=["t_end"],
    validators={"integrator": ChoiceValidator(INTEGRATORS)},
    optional_validators={"fixed_dt": PositiveValidator(), "c_cfl": PositiveValidator()},
)
def run(
    initial: FlowState,
    t_end: float,
    integrator: str = "rk4",
    c_cfl: typing.Optional[float] = 0.1,
    fixed_dt: typing.Optional[float] = None,
    keep_every: int = 1,
    on_step: typing.Optional[typing.Callable[[FlowState], None]] = None,
) -> FlowTrajectory:
    """
    Advance ``initial`` to ``t_end``; the last step is shortened to land on ``t_end`` exactly

        Parameters:
            initial (FlowState): starting state (``initial_state`` or a resumed checkpoint)
            t_end (float): final time
            integrator (str): ``rk4`` or ``euler``
            c_cfl (float): time-step policy factor, used when ``fixed_dt`` is None
            fixed_dt (float): constant step size overriding the policy
            keep_every (int): keep every n-th snapshot in the trajectory (0 keeps only the first and last)
            on_step (Callable[[FlowState], None]): called with the initial state and after every step

        Returns:
            trajectory (FlowTrajectory)

        Raises:
            StabilityViolation: with the partial trajectory attached as ``trajectory``
    """
    trajectory = FlowTrajectory(states=[initial])
    if on_step is not None:
        on_step(initial)
    state = initial
    logger.info(
        "coflow run: route=%s scheme=%s integrator=%s A=%g from t=%g to t=%g",
        state.route, state.scheme, integrator, state.A, state.t, t_end,
    )
    while t_end - state.t > 1e-14 * max(1.0, abs(t_end)):
        dt = fixed_dt if fixed_dt is not None else stable_dt(state, c_cfl if c_cfl is not None else 0.1)
        dt = min(dt, t_end - state.t)
        try:
            state = step(state, dt, integrator)
        except StabilityViolation as error:
            error.trajectory = trajectory
            logger.error("run aborted: %s", error)
            raise
        if keep_every > 0 and state.step_index % keep_every == 0:
            trajectory.states.append(state)
        if on_step is not None:
            on_step(state)
    if trajectory.states[-1] is not state:
        trajectory.states.append(state)
    trajectory.completed = True
    logger.info("coflow run finished after %d steps at t=%g", state.step_index, state.t)
    return trajectory
