"""
Full torsion tensor of a G2-structure field and its intrinsic torsion forms.
"""
import logging
import typing
from dataclasses import dataclass

import numpy as np

from . import exterior
from .errors import NotCoclosed
from .exterior_calculus import exterior_derivative
from .fields import ConnectionField
from .fields import FormField
from .fields import MetricField
from .fields import TensorField
from .fields import covariant_gradient
from .g2_algebra import project_two
from .lab_config import LabConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TorsionTensor:
    """
    Full torsion T_ij, defined by ∇_i φ_jkl = T_i^m ψ_mjkl.
    """

    T: TensorField

    def trace(self, metric: MetricField) -> np.ndarray:
        return np.einsum("...ij,...ij->...", metric.g_inv, self.T.data)

    def raised(self, metric: MetricField) -> np.ndarray:
        """T_i^j."""
        return np.einsum("...im,...mj->...ij", self.T.data, metric.g_inv)

    def antisymmetry(self) -> float:
        return float(np.max(np.abs(self.T.data - np.swapaxes(self.T.data, -1, -2))))


@dataclass(frozen=True, eq=False)
class TorsionForms:
    """
    Intrinsic torsion forms; arrays carry the grid (or any) leading axes.
    """

    tau0: np.ndarray
    """Scalar, (4/7) tr T."""

    tau1: np.ndarray
    """1-form components (τ1)_m, shape (..., 7)."""

    tau2: np.ndarray
    """2-form components in Ω²₁₄, shape (..., 21)."""

    tau3: np.ndarray
    """Symmetric traceless 2-tensor representing τ3, shape (..., 7, 7)."""


def full_torsion(
    phi: FormField,
    psi: FormField,
    metric: MetricField,
    connection: ConnectionField,
    scheme: typing.Optional[str] = None,
) -> TorsionTensor:
    """
    T_i^j = (1/24) ∇_i φ_lmn ψ^{jlmn}, lowered with g

        Parameters:
            phi (FormField): the 3-form field
            psi (FormField): ∗φ
            metric (MetricField): g(φ)
            connection (ConnectionField): Levi-Civita connection of g

        Returns:
            torsion (TorsionTensor)
    """
    nabla_phi = covariant_gradient(phi.to_tensor().data, (True,) * 3, connection, phi.grid, scheme)
    nabla_components = exterior.from_tensor(nabla_phi, 3)
    psi_up = exterior.interior_all(exterior.raise_all(psi.components, 4, metric.g_inv), 4)
    mixed = 0.25 * np.einsum("...iI,...jI->...ij", nabla_components, psi_up, optimize=True)
    lowered = np.einsum("...im,...mj->...ij", mixed, metric.g)
    return TorsionTensor(TensorField.covariant(phi.grid, lowered))


def torsion_from_psi(
    psi: FormField,
    phi: FormField,
    metric: MetricField,
    connection: ConnectionField,
    scheme: typing.Optional[str] = None,
) -> TorsionTensor:
    """
    Independent torsion from ∇ψ: least-squares fit of T at every node to ∇_m ψ = −T_m ∧ φ,
    where T_m is the 1-form with components T_ma
    """
    nabla_psi = covariant_gradient(psi.to_tensor().data, (True,) * 4, connection, psi.grid, scheme)
    nabla_components = exterior.from_tensor(nabla_psi, 4)
    basis = np.einsum("aIK,...I->...aK", exterior.wedge_table(1, 3), phi.components, optimize=True)
    normal = np.einsum("...aK,...bK->...ab", basis, basis)
    rhs = -np.einsum("...aK,...mK->...ma", basis, nabla_components, optimize=True)
    fitted = np.einsum("...ab,...mb->...ma", np.linalg.inv(normal), rhs)
    return TorsionTensor(TensorField.covariant(psi.grid, fitted))


def phi_torsion_residual(
    phi: FormField,
    psi: FormField,
    torsion: TorsionTensor,
    metric: MetricField,
    connection: ConnectionField,
    scheme: typing.Optional[str] = None,
) -> float:
    """‖∇_i φ_jkl − T_i^m ψ_mjkl‖∞."""
    nabla_phi = covariant_gradient(phi.to_tensor().data, (True,) * 3, connection, phi.grid, scheme)
    predicted = np.einsum("...im,...mjkl->...ijkl", torsion.raised(metric), psi.to_tensor().data, optimize=True)
    return float(np.max(np.abs(nabla_phi - predicted)))


def decompose_torsion(
    T: np.ndarray, phi: np.ndarray, g: np.ndarray, g_inv: np.ndarray, vol: np.ndarray
) -> TorsionForms:
    """
    Array-level torsion forms of any 2-tensor T with respect to φ and its metric

    τ0 = (4/7) tr T, τ3 = (τ0/4) g − sym T, and with A = skew T:
    (τ1)^l = −(1/6) (π7 A)_ij φ^{lij}, τ2 = −2 π14 A.
    """
    trace = np.einsum("...ij,...ij->...", g_inv, T)
    tau0 = 4.0 / 7.0 * trace
    symmetric = 0.5 * (T + np.swapaxes(T, -1, -2))
    skew = exterior.from_tensor(0.5 * (T - np.swapaxes(T, -1, -2)), 2)
    seven, fourteen = project_two(skew, phi, g_inv, vol)
    phi_up = exterior.interior_all(exterior.raise_all(phi, 3, g_inv), 3)
    tau1_up = -np.einsum("...lJ,...J->...l", phi_up, seven) / 3.0
    tau1 = np.einsum("...lm,...m->...l", g, tau1_up)
    tau3 = 0.25 * tau0[..., None, None] * g - symmetric
    return TorsionForms(tau0=tau0, tau1=tau1, tau2=-2.0 * fourteen, tau3=tau3)


def reconstruct_torsion(forms: TorsionForms, phi: np.ndarray, g: np.ndarray, g_inv: np.ndarray) -> np.ndarray:
    """T = (τ0/4) g − τ3 − τ1^#⌟φ − ½ τ2 as a full 2-tensor."""
    tau1_up = np.einsum("...lm,...m->...l", g_inv, forms.tau1)
    contracted = exterior.to_tensor(exterior.interior(tau1_up, phi, 3), 2)
    return (
        0.25 * forms.tau0[..., None, None] * g
        - forms.tau3
        - contracted
        - 0.5 * exterior.to_tensor(forms.tau2, 2)
    )


def torsion_forms(torsion: TorsionTensor, phi: FormField, metric: MetricField) -> TorsionForms:
    """Intrinsic torsion forms of a torsion field."""
    return decompose_torsion(torsion.T.data, phi.components, metric.g, metric.g_inv, metric.vol)


def coclosed_residual(psi: FormField, scheme: typing.Optional[str] = None) -> float:
    """‖dψ‖∞ (metric free)."""
    return exterior_derivative(psi, scheme).max_abs()


def coclosed_threshold(psi: FormField, scheme: typing.Optional[str] = None) -> float:
    scheme = LabConfig.default_scheme() if scheme is None else scheme
    return LabConfig.coclosed_threshold(scheme, psi.grid.min_spacing, psi.max_abs())


def coclosed_symmetry_check(
    torsion: TorsionTensor,
    psi: FormField,
    scheme: typing.Optional[str] = None,
    threshold: typing.Optional[float] = None,
) -> float:
    """
    ‖T − Tᵀ‖∞ for a coclosed structure

        Raises:
            NotCoclosed: ‖dψ‖∞ exceeds the threshold, so symmetry is not expected
    """
    residual = coclosed_residual(psi, scheme)
    threshold = coclosed_threshold(psi, scheme) if threshold is None else threshold
    if residual > threshold:
        raise NotCoclosed(
            f"‖dψ‖∞ = {residual:.3e} exceeds the coclosedness threshold {threshold:.3e}",
            residual=residual,
            threshold=threshold,
        )
    return torsion.antisymmetry()
