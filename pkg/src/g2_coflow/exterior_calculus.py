"""
Exterior calculus on form fields: d, ∗, δ and the two Laplacians.
"""
import typing
from dataclasses import dataclass

import numpy as np

from . import exterior
from .argument_validators import ChoiceValidator
from .argument_validators import RangeValidator
from .errors import InvalidArgument
from .fields import SCHEMES
from .fields import ConnectionField
from .fields import FormField
from .fields import MetricField
from .fields import gradient
from .fields import trace_laplacian
from .validate_args_decorator import validate_args


@validate_args(
    validators={"form.degree": RangeValidator(0, 6, integer=True)},
    optional_validators={"scheme": ChoiceValidator(SCHEMES)},
)
def exterior_derivative(form: FormField, scheme: typing.Optional[str] = None) -> FormField:
    """
    d of a p-form field (p ≤ 6), metric free: (dα) = Σ_v e^v ∧ ∂_v α
    """
    partials = gradient(form.components, form.grid, scheme)
    components = np.einsum("vIK,...vI->...K", exterior.wedge_table(1, form.degree), partials, optimize=True)
    return FormField(form.grid, form.degree + 1, components)


def hodge_star_field(form: FormField, metric: MetricField) -> FormField:
    return FormField(
        form.grid,
        exterior.DIM - form.degree,
        exterior.hodge_star(form.components, form.degree, metric.g_inv, metric.vol),
    )


@validate_args(
    validators={"form.degree": RangeValidator(1, 7, integer=True)},
    optional_validators={"scheme": ChoiceValidator(SCHEMES)},
)
def codifferential(form: FormField, metric: MetricField, scheme: typing.Optional[str] = None) -> FormField:
    """
    δ = (−1)^p ∗d∗ on p-forms, the formal adjoint of d for the grid inner product
    """
    dual = exterior_derivative(hodge_star_field(form, metric), scheme)
    result = hodge_star_field(dual, metric)
    return result if form.degree % 2 == 0 else result * -1.0


def hodge_laplacian(form: FormField, metric: MetricField, scheme: typing.Optional[str] = None) -> FormField:
    """Δ = dδ + δd (nonnegative: Δ sin x = sin x on functions)."""
    total = FormField.zeros(form.grid, form.degree)
    if form.degree > 0:
        total = total + exterior_derivative(codifferential(form, metric, scheme), scheme)
    if form.degree < exterior.DIM:
        total = total + codifferential(exterior_derivative(form, scheme), metric, scheme)
    return total


@dataclass(frozen=True, eq=False)
class ExteriorCalculusResult:
    """
    The exterior calculus of one form field. ``d`` is ``None`` for 7-forms and ``delta`` for functions.
    """

    d: typing.Optional[FormField]
    delta: typing.Optional[FormField]
    hodge_laplacian: FormField
    trace_laplacian: FormField


@validate_args(optional_validators={"scheme": ChoiceValidator(SCHEMES)})
def exterior_calculus(
    form: FormField, metric: MetricField, connection: ConnectionField, scheme: typing.Optional[str] = None
) -> ExteriorCalculusResult:
    """
    d a, δ a, Δ_Hodge a and △_trace a = g^{ij}∇_i∇_j a of a form field
    """
    if form.grid != metric.grid:
        raise InvalidArgument("form and metric live on different grids")
    d = exterior_derivative(form, scheme) if form.degree < exterior.DIM else None
    delta = codifferential(form, metric, scheme) if form.degree > 0 else None
    laplacian = FormField.zeros(form.grid, form.degree)
    if delta is not None:
        laplacian = laplacian + exterior_derivative(delta, scheme)
    if d is not None:
        laplacian = laplacian + codifferential(d, metric, scheme)
    rough = FormField.from_tensor(trace_laplacian(form.to_tensor(), metric, connection, scheme))
    return ExteriorCalculusResult(d=d, delta=delta, hodge_laplacian=laplacian, trace_laplacian=rough)
