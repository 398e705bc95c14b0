import functools
import math
from typing import Sequence

import numpy as np
from g2_coflow.coflow import FlowState
from g2_coflow.coflow import initial_state
from g2_coflow.fields import FormField
from g2_coflow.fields import Grid
from g2_coflow.fields import MetricField
from g2_coflow.initial_data import perturbation_psi


def line_grid(n: int = 16) -> Grid:
    return Grid((n, 1, 1, 1, 1, 1, 1))


@functools.lru_cache(maxsize=None)
def perturbed_psi(n: int = 32, amplitude: float = 1e-3, seed: int = 7, modes: Sequence[int] = (1, 2)) -> FormField:
    return perturbation_psi(line_grid(n), amplitude, list(modes), seed, [0])


@functools.lru_cache(maxsize=None)
def perturbed_state(n: int = 32, amplitude: float = 1e-3, A: float = 1.0, route: str = "direct") -> FlowState:
    return initial_state(perturbed_psi(n, amplitude), A, route)


def warped_metric(grid: Grid, amplitude: float = 0.1) -> MetricField:
    """diag(1, e^{2f(x1)}, 1, …, 1) with f = amplitude·sin x1; its (1,2) sectional curvature is −(f'' + f'²)."""
    f = amplitude * np.sin(grid.coordinate(0))
    g = np.zeros(grid.dims + (7, 7))
    g[...] = np.eye(7)
    g[..., 1, 1] = np.exp(2.0 * f)
    return MetricField.from_components(grid, g)


def smooth_components(grid: Grid, count: int, seed: int = 0, modes: int = 2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    x = grid.coordinate(0)[..., None]
    data = np.zeros(grid.dims + (count,))
    for mode in range(1, modes + 1):
        data = data + rng.standard_normal(count) * np.cos(mode * x) + rng.standard_normal(count) * np.sin(mode * x)
    return data


def factorial_magnitudes(C: float, L: float, ks: Sequence[int], t: float = 1.0) -> list:
    """M_k with t^{k/2} M_k = C L^{k/2} (k+1)! exactly."""
    return [C * (L / t) ** (k / 2.0) * math.factorial(k + 1) for k in ks]
