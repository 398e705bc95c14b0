"""
Pointwise multilinear algebra of G2-structures.

The array-level functions (``bilinear_form``, ``metric_arrays``, ``theta``, ``solve_phi``, ``project_two``,
``project_three``) broadcast over leading axes and are shared with the field code; ``PointForm`` and
``Metric`` wrap a single point.
"""
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np

from . import exterior
from .argument_validators import DegreeValidator
from .argument_validators import PositiveValidator
from .argument_validators import RangeValidator
from .errors import NoConvergence
from .errors import NotPositive
from .errors import SingularMetric
from .lab_config import LabConfig
from .validate_args_decorator import validate_args

logger = logging.getLogger(__name__)

PHI0_TERMS: typing.Dict[typing.Tuple[int, ...], float] = {
    (1, 2, 3): 1.0,
    (1, 4, 5): 1.0,
    (1, 6, 7): 1.0,
    (2, 4, 6): 1.0,
    (2, 5, 7): -1.0,
    (3, 4, 7): -1.0,
    (3, 5, 6): -1.0,
}
PSI0_TERMS: typing.Dict[typing.Tuple[int, ...], float] = {
    (4, 5, 6, 7): 1.0,
    (2, 3, 6, 7): 1.0,
    (2, 3, 4, 5): 1.0,
    (1, 3, 5, 7): 1.0,
    (1, 3, 4, 6): -1.0,
    (1, 2, 5, 6): -1.0,
    (1, 2, 4, 7): -1.0,
}

PHI_NORM_SQUARED = 42.0
PSI_NORM_SQUARED = 168.0


@dataclass(frozen=True, eq=False)
class PointForm:
    """
    A p-form at one point, stored over the C(7, p) strictly increasing index tuples.
    """

    degree: int
    """Form degree, 0..7."""

    components: np.ndarray
    """Coefficients in lexicographic order of the increasing index tuples."""

    def __post_init__(self) -> None:
        if not 0 <= self.degree <= exterior.DIM:
            raise ValueError(f"form degree must lie in 0..7, got {self.degree}")
        components = np.array(self.components, dtype=float).reshape(-1)
        if components.shape != (exterior.n_components(self.degree),):
            raise ValueError(
                f"a {self.degree}-form has {exterior.n_components(self.degree)} components, got {components.size}"
            )
        components.setflags(write=False)
        object.__setattr__(self, "components", components)

    @classmethod
    def from_terms(cls, degree: int, terms: typing.Mapping[typing.Tuple[int, ...], float]) -> "PointForm":
        """
        Build a form from 1-based index tuples, e.g. ``{(1, 2, 3): 1.0}`` for e¹²³
        """
        components = np.zeros(exterior.n_components(degree))
        for indices, value in terms.items():
            position, sign = exterior.component_index([i - 1 for i in indices])
            if sign == 0 or len(indices) != degree:
                raise ValueError(f"invalid index tuple {indices} for a {degree}-form")
            components[position] += sign * value
        return cls(degree, components)

    @classmethod
    def zero(cls, degree: int) -> "PointForm":
        return cls(degree, np.zeros(exterior.n_components(degree)))

    @classmethod
    def from_tensor(cls, tensor: np.ndarray) -> "PointForm":
        tensor = np.asarray(tensor, dtype=float)
        return cls(tensor.ndim, exterior.antisymmetrize(tensor, tensor.ndim))

    def component(self, *indices: int) -> float:
        """Value on a 1-based index tuple in any order (sign included)."""
        position, sign = exterior.component_index([i - 1 for i in indices])
        return float(sign * self.components[position]) if sign else 0.0

    def to_tensor(self) -> np.ndarray:
        return exterior.to_tensor(self.components, self.degree)

    def wedge(self, other: "PointForm") -> "PointForm":
        return PointForm(
            self.degree + other.degree, exterior.wedge(self.components, self.degree, other.components, other.degree)
        )

    def interior(self, vector: np.ndarray) -> "PointForm":
        return PointForm(self.degree - 1, exterior.interior(np.asarray(vector, dtype=float), self.components, self.degree))

    def inner(self, other: "PointForm", metric: typing.Optional["Metric"] = None) -> float:
        g_inv = np.eye(exterior.DIM) if metric is None else metric.g_inv
        return float(exterior.inner_product(self.components, other.components, self.degree, g_inv))

    def norm_squared(self, metric: typing.Optional["Metric"] = None) -> float:
        """Full-index norm Σ a_{i…} a^{i…}."""
        return math.factorial(self.degree) * self.inner(self, metric)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.components)))

    def __add__(self, other: "PointForm") -> "PointForm":
        return PointForm(self.degree, self.components + other.components)

    def __sub__(self, other: "PointForm") -> "PointForm":
        return PointForm(self.degree, self.components - other.components)

    def __neg__(self) -> "PointForm":
        return PointForm(self.degree, -self.components)

    def __mul__(self, scalar: float) -> "PointForm":
        return PointForm(self.degree, scalar * self.components)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class Metric:
    """
    Symmetric positive-definite 2-tensor at a point.
    """

    g: np.ndarray
    g_inv: np.ndarray
    det_g: float
    vol: float
    """√det g."""

    @classmethod
    def from_matrix(cls, g: np.ndarray) -> "Metric":
        g = np.asarray(g, dtype=float)
        g = 0.5 * (g + g.T)
        det_g = float(np.linalg.det(g))
        if det_g <= 1e-12 or np.linalg.eigvalsh(g)[0] <= 0:
            raise SingularMetric(f"metric is not positive definite (det g = {det_g:.3e})")
        return cls(g, np.linalg.inv(g), det_g, math.sqrt(det_g))

    @classmethod
    def identity(cls) -> "Metric":
        return cls(np.eye(exterior.DIM), np.eye(exterior.DIM), 1.0, 1.0)


@dataclass(frozen=True, eq=False)
class BilinearFormB:
    B: np.ndarray
    """Coefficient of dx¹∧…∧dx⁷ in B_φ(∂i, ∂j)."""


@dataclass(frozen=True, eq=False)
class ProjectionSplit:
    """
    Irreducible G2 components of a 2- or 3-form, keyed ``2_7``, ``2_14`` or ``3_1``, ``3_7``, ``3_27``.
    """

    parts: typing.Dict[str, PointForm]

    def total(self) -> PointForm:
        forms = list(self.parts.values())
        result = forms[0]
        for form in forms[1:]:
            result = result + form
        return result


def standard_structure() -> typing.Tuple[PointForm, PointForm]:
    """
    Returns the standard pair (φ0, ψ0 = ∗φ0) on R⁷
    """
    return PointForm.from_terms(3, PHI0_TERMS), PointForm.from_terms(4, PSI0_TERMS)


def bilinear_form(phi: np.ndarray) -> np.ndarray:
    """B_ij as the volume coefficient of (1/6)(∂i⌟φ)∧(∂j⌟φ)∧φ, for components of shape (..., 35)."""
    contracted = exterior.interior_all(phi, 3)
    pairs = np.einsum("IJK,...iI,...jJ->...ijK", exterior.wedge_table(2, 2), contracted, contracted, optimize=True)
    top = exterior.wedge_table(4, 3)[:, :, 0]
    return np.einsum("KL,...ijK,...L->...ij", top, pairs, phi, optimize=True) / 6.0


def _first_node(mask: np.ndarray) -> typing.Optional[typing.Tuple[int, ...]]:
    hits = np.argwhere(mask)
    if hits.size == 0:
        return None
    return tuple(int(i) for i in hits[0])


def metric_arrays(phi: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Metric and bilinear form induced by positive 3-form components

        Parameters:
            phi (np.ndarray): components of shape (..., 35)

        Returns:
            (g, B), each of shape (..., 7, 7)

        Raises:
            NotPositive: at the first node where det B ≤ 0 or the normalised form has an eigenvalue
                below the positivity floor
    """
    B = bilinear_form(phi)
    B = 0.5 * (B + np.swapaxes(B, -1, -2))
    det_b = np.linalg.det(B)
    bad = ~(det_b > 0)
    if np.any(bad):
        node = _first_node(bad)
        raise NotPositive(f"3-form is not positive (det B ≤ 0) at node {node}", node=node)
    g = det_b[..., None, None] ** (-1.0 / 9.0) * B
    floor = np.linalg.eigvalsh(g)[..., 0]
    bad = floor <= LabConfig.positivity_floor()
    if np.any(bad):
        node = _first_node(bad)
        raise NotPositive(f"3-form is not positive (indefinite metric) at node {node}", node=node)
    return g, B


def metric_data(g: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(g⁻¹, det g, √det g) for metrics of shape (..., 7, 7)."""
    det_g = np.linalg.det(g)
    return np.linalg.inv(g), det_g, np.sqrt(det_g)


def theta(phi: np.ndarray) -> np.ndarray:
    """The nonlinear map φ ↦ ∗_{g(φ)} φ on components of shape (..., 35)."""
    g, _ = metric_arrays(phi)
    g_inv, _, vol = metric_data(g)
    return exterior.hodge_star(phi, 3, g_inv, vol)


def hitchin_volume(phi: np.ndarray) -> np.ndarray:
    """(1/7) times the coefficient of φ ∧ ∗φ, equal to √det g(φ)."""
    psi = theta(phi)
    return exterior.wedge(phi, 3, psi, 4)[..., 0] / 7.0


def is_positive(phi: PointForm) -> bool:
    try:
        metric_arrays(phi.components)
    except NotPositive:
        return False
    return True


def project_two(beta: np.ndarray, phi: np.ndarray, g_inv: np.ndarray, vol: np.ndarray) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    (π7 β, π14 β) from the eigenvalues 2 and −1 of β ↦ ∗(φ∧β)
    """
    rotated = exterior.hodge_star(exterior.wedge(phi, 3, beta, 2), 5, g_inv, vol)
    return (beta + rotated) / 3.0, (2.0 * beta - rotated) / 3.0


def seven_vector(eta: np.ndarray, psi: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """X^l = (1/24) η_ijk ψ^{lijk}, so that π7 η = X⌟ψ."""
    raised = exterior.interior_all(exterior.raise_all(psi, 4, g_inv), 4)
    return 0.25 * np.einsum("...lI,...I->...l", raised, eta)


def project_three(
    eta: np.ndarray, phi: np.ndarray, psi: np.ndarray, g_inv: np.ndarray
) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    (π1 η, π7 η, π27 η) for 3-form components

    π1 is the g-orthogonal projection onto φ, π7 is X⌟ψ and π27 the remainder.
    """
    scale = exterior.inner_product(eta, phi, 3, g_inv) / exterior.inner_product(phi, phi, 3, g_inv)
    one = scale[..., None] * phi
    seven = exterior.interior(seven_vector(eta, psi, g_inv), psi, 4)
    return one, seven, eta - one - seven


@validate_args(
    finite=["psi", "guess"],
    optional_validators={"tol": PositiveValidator(), "max_iter": RangeValidator(lower=1, integer=True)},
)
def solve_phi(
    psi: np.ndarray, guess: np.ndarray, tol: typing.Optional[float] = None, max_iter: typing.Optional[int] = None
) -> typing.Tuple[np.ndarray, int]:
    """
    Recover φ with ∗_{g(φ)} φ = ψ for 4-form components of shape (..., 35)

    Each iteration applies the inverse of the linearisation of φ ↦ ∗_{g(φ)}φ at the current iterate:
    with r̂ = ∗(ψ − ∗φ) the correction is (3/4)π1 r̂ + π7 r̂ − π27 r̂. The residual is tested before
    every update, so an already consistent guess is returned unchanged.

        Parameters:
            psi (np.ndarray): target 4-form components
            guess (np.ndarray): positive starting 3-form, broadcastable to psi
            tol (float): sup-norm residual tolerance, ``LabConfig.phi_tolerance()`` if None
            max_iter (int): evaluation cap, ``LabConfig.phi_max_iterations()`` if None

        Returns:
            (phi, evaluations) where evaluations counts residual evaluations

        Raises:
            NoConvergence: when the cap is reached or an iterate leaves the positive cone
    """
    tol = LabConfig.phi_tolerance() if tol is None else tol
    max_iter = LabConfig.phi_max_iterations() if max_iter is None else max_iter
    psi = np.asarray(psi, dtype=float)
    phi = np.array(np.broadcast_to(guess, psi.shape[:-1] + (35,)), dtype=float)
    worst = np.zeros(psi.shape[:-1])
    for evaluation in range(1, max_iter + 1):
        try:
            g, _ = metric_arrays(phi)
        except NotPositive as error:
            raise NoConvergence(
                f"φ iterate left the positive cone at node {error.node} after {evaluation - 1} updates",
                node=error.node,
                iterations=evaluation,
            ) from error
        g_inv, _, vol = metric_data(g)
        current = exterior.hodge_star(phi, 3, g_inv, vol)
        residual = psi - current
        worst = np.max(np.abs(residual), axis=-1)
        if float(np.max(worst)) <= tol:
            logger.debug("φ recovered after %d evaluations (residual %.3e)", evaluation, float(np.max(worst)))
            return phi, evaluation
        r_hat = exterior.hodge_star(residual, 4, g_inv, vol)
        one, seven, _ = project_three(r_hat, phi, current, g_inv)
        phi = phi - r_hat + 1.75 * one + 2.0 * seven
    node = _first_node(worst == np.max(worst)) if worst.ndim else None
    raise NoConvergence(
        f"φ recovery did not converge in {max_iter} evaluations (residual {float(np.max(worst)):.3e} at node {node})",
        node=node,
        iterations=max_iter,
    )


def metric_from_phi(phi: PointForm) -> typing.Tuple[Metric, BilinearFormB]:
    """
    Metric and bilinear form induced by a positive 3-form

        Raises:
            NotPositive: when φ lies outside the open positive cone
    """
    if phi.degree != 3:
        raise ValueError(f"metric_from_phi expects a 3-form, got degree {phi.degree}")
    g, B = metric_arrays(phi.components)
    return Metric.from_matrix(g), BilinearFormB(B)


def hodge_star(a: PointForm, m: Metric) -> PointForm:
    return PointForm(exterior.DIM - a.degree, exterior.hodge_star(a.components, a.degree, m.g_inv, np.asarray(m.vol)))


@validate_args(
    positive=["tol"],
    validators={
        "psi": DegreeValidator([4]),
        "guess": DegreeValidator([3]),
        "max_iter": RangeValidator(lower=1, integer=True),
    },
)
def phi_from_psi(psi: PointForm, guess: PointForm, tol: float = 1e-12, max_iter: int = 50) -> PointForm:
    """
    The positive 3-form φ, near ``guess``, with ∗_{g(φ)} φ = ψ

        Raises:
            NoConvergence: ψ is outside the recoverable neighbourhood of the guess
    """
    phi, _ = solve_phi(psi.components, guess.components, tol, max_iter)
    return PointForm(3, phi)


@validate_args(validators={"a": DegreeValidator([2, 3]), "phi": DegreeValidator([3])})
def project(a: PointForm, phi: PointForm, m: Metric) -> ProjectionSplit:
    """
    Split a 2- or 3-form into its irreducible G2 components with respect to φ and its metric
    """
    vol = np.asarray(m.vol)
    if a.degree == 2:
        seven, fourteen = project_two(a.components, phi.components, m.g_inv, vol)
        return ProjectionSplit({"2_7": PointForm(2, seven), "2_14": PointForm(2, fourteen)})
    psi = exterior.hodge_star(phi.components, 3, m.g_inv, vol)
    one, seven, twenty_seven = project_three(a.components, phi.components, psi, m.g_inv)
    return ProjectionSplit(
        {"3_1": PointForm(3, one), "3_7": PointForm(3, seven), "3_27": PointForm(3, twenty_seven)}
    )


def identity_residuals(phi: PointForm, m: Metric, psi: PointForm) -> typing.Tuple[float, float, float, float]:
    """
    Max-abs residuals of the four contraction identities

        φ_ijk φ_abc g^kc = g_ia g_jb − g_ib g_ja + ψ_ijab
        φ_ijk φ_abc g^jb g^kc = 6 g_ia
        ψ_ijkl ψ_abcd g^jb g^kc g^ld = 24 g_ia
        φ_ijq ψ_abkl g^ia g^jb = 4 φ_qkl
    """
    f = phi.to_tensor()
    s = psi.to_tensor()
    g, gi = m.g, m.g_inv
    first = np.einsum("ijk,abc,kc->ijab", f, f, gi, optimize=True) - (
        np.einsum("ia,jb->ijab", g, g) - np.einsum("ib,ja->ijab", g, g) + s
    )
    second = np.einsum("ijk,abc,jb,kc->ia", f, f, gi, gi, optimize=True) - 6.0 * g
    third = np.einsum("ijkl,abcd,jb,kc,ld->ia", s, s, gi, gi, gi, optimize=True) - 24.0 * g
    fourth = np.einsum("ijq,abkl,ia,jb->qkl", f, s, gi, gi, optimize=True) - 4.0 * f
    return tuple(float(np.max(np.abs(r))) for r in (first, second, third, fourth))  # type: ignore[return-value]


def random_positive_phi(rng: np.random.Generator, scale: float = 0.1) -> PointForm:
    """
    A random positive 3-form: φ0 pulled back by a random orientation-preserving near-identity linear map
    """
    phi0, _ = standard_structure()
    frame = np.eye(exterior.DIM) + scale * rng.standard_normal((exterior.DIM, exterior.DIM))
    if np.linalg.det(frame) < 0:
        frame[0] = -frame[0]
    pulled = np.einsum("abc,ai,bj,ck->ijk", phi0.to_tensor(), frame, frame, frame, optimize=True)
    return PointForm(3, exterior.from_tensor(pulled, 3))
