"""
The property battery behind ``g2-coflow verify``: quick checks of the algebra, calculus and flow invariants.
"""
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np

from . import exterior
from .analysis import background_from_metric
from .analysis import commutator_monitor
from .analysis import fit_factorial_bound
from .coflow import initial_state
from .coflow import run
from .errors import CoflowError
from .exterior_calculus import codifferential
from .exterior_calculus import exterior_derivative
from .fields import FormField
from .fields import Grid
from .fields import MetricField
from .fields import TensorField
from .fields import grid_inner_product
from .g2_algebra import PHI_NORM_SQUARED
from .g2_algebra import PSI_NORM_SQUARED
from .g2_algebra import PointForm
from .g2_algebra import hodge_star
from .g2_algebra import identity_residuals
from .g2_algebra import metric_from_phi
from .g2_algebra import project
from .g2_algebra import random_positive_phi
from .initial_data import flat_psi
from .initial_data import perturbation_psi
from .torsion import coclosed_residual
from .torsion import coclosed_threshold
from .torsion import decompose_torsion
from .torsion import reconstruct_torsion

logger = logging.getLogger(__name__)

_LINE = Grid((16, 1, 1, 1, 1, 1, 1))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _random_form(grid: Grid, degree: int, rng: np.random.Generator, modes: int = 2) -> FormField:
    x = grid.coordinate(0)[..., None]
    components = np.zeros(grid.dims + (exterior.n_components(degree),))
    for mode in range(1, modes + 1):
        components = components + rng.standard_normal(components.shape[-1]) * np.cos(mode * x)
        components = components + rng.standard_normal(components.shape[-1]) * np.sin(mode * x)
    return FormField(grid, degree, components)


def check_identities(samples: int = 50, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        phi = random_positive_phi(rng)
        metric, _ = metric_from_phi(phi)
        psi = hodge_star(phi, metric)
        worst = max(
            worst,
            *identity_residuals(phi, metric, psi),
            abs(phi.norm_squared(metric) - PHI_NORM_SQUARED),
            abs(psi.norm_squared(metric) - PSI_NORM_SQUARED),
        )
    return CheckResult("contraction identities", worst <= 1e-10, f"max residual {worst:.2e}")


def check_projections(samples: int = 20, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        phi = random_positive_phi(rng)
        metric, _ = metric_from_phi(phi)
        for degree in (2, 3):
            a = PointForm(degree, rng.standard_normal(exterior.n_components(degree)))
            worst = max(worst, (project(a, phi, metric).total() - a).max_abs())
    return CheckResult("irreducible projections", worst <= 1e-10, f"max reassembly residual {worst:.2e}")


def check_torsion_round_trip(samples: int = 50, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        phi = random_positive_phi(rng)
        metric, _ = metric_from_phi(phi)
        T = rng.standard_normal((7, 7))
        forms = decompose_torsion(T, phi.components, metric.g, metric.g_inv, np.asarray(metric.vol))
        rebuilt = reconstruct_torsion(forms, phi.components, metric.g, metric.g_inv)
        worst = max(worst, float(np.max(np.abs(rebuilt - T))))
    return CheckResult("torsion forms round trip", worst <= 1e-11, f"max residual {worst:.2e}")


def check_fixed_point(steps: int = 100) -> CheckResult:
    grid = Grid((8, 1, 1, 1, 1, 1, 1))
    psi0 = flat_psi(grid)
    drift = 0.0
    for A in (0.5, 1.0, 2.0):
        for route in ("direct", "velocity"):
            trajectory = run(initial_state(psi0, A, route), t_end=steps * 1e-2, fixed_dt=1e-2, keep_every=0)
            drift = max(drift, (trajectory.final.psi - psi0).max_abs())
    return CheckResult("flat fixed point", drift <= 1e-10, f"max drift {drift:.2e}")


def check_closedness() -> CheckResult:
    psi = perturbation_psi(_LINE, 1e-2, [1, 2], 7, [0])
    residual, threshold = coclosed_residual(psi), coclosed_threshold(psi)
    return CheckResult("closed perturbation", residual <= threshold, f"‖dψ‖∞ {residual:.2e} ≤ {threshold:.2e}")


def check_adjointness(seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    state = initial_state(perturbation_psi(_LINE, 1e-2, [1, 2], 7, [0]), 1.0)
    metric = state.cache.metric
    alpha, beta = _random_form(_LINE, 2, rng), _random_form(_LINE, 3, rng)
    left = grid_inner_product(exterior_derivative(alpha), beta, metric)
    right = grid_inner_product(alpha, codifferential(beta, metric), metric)
    gap = abs(left - right) / max(1.0, abs(left))
    return CheckResult("d and δ adjoint", gap <= 1e-10, f"relative gap {gap:.2e}")


def check_flat_commutator(seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    S = TensorField.covariant(_LINE, _random_form(_LINE, 1, rng).components)
    report = commutator_monitor(S, background_from_metric(MetricField.flat(_LINE)), 1)
    return CheckResult("commutator on a flat background", report.lhs_sup <= 1e-10, f"LHS {report.lhs_sup:.2e}")


def check_synthetic_fit() -> CheckResult:
    ks = list(range(7))
    magnitudes = [3.0 * 2.0 ** (k / 2.0) * math.factorial(k + 1) for k in ks]
    fit = fit_factorial_bound(ks, [1.0] * len(ks), magnitudes)
    error = max(abs(fit.C_fit - 3.0), abs(fit.L_fit - 2.0))
    return CheckResult("synthetic analyticity fit", error <= 1e-10, f"(C, L) = ({fit.C_fit:.12g}, {fit.L_fit:.12g})")


CHECKS: typing.Tuple[typing.Callable[[], CheckResult], ...] = (
    check_identities,
    check_projections,
    check_torsion_round_trip,
    check_fixed_point,
    check_closedness,
    check_adjointness,
    check_flat_commutator,
    check_synthetic_fit,
)


def run_battery() -> typing.List[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            result = check()
        except CoflowError as error:
            result = CheckResult(check.__name__.removeprefix("check_").replace("_", " "), False, str(error))
        logger.info("%s: %s (%s)", result.name, "pass" if result.passed else "FAIL", result.detail)
        results.append(result)
    return results


def format_table(results: typing.Sequence[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  result  detail"]
    for r in results:
        lines.append(f"{r.name.ljust(width)}  {'pass' if r.passed else 'FAIL':6}  {r.detail}")
    return "\n".join(lines)
