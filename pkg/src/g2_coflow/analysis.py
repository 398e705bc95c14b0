"""
Diagnostics of coflow states and trajectories: Λ, Shi-type derivative sequences and their aggregates,
the analyticity fit, and numerical monitors for the commutator and evolution inequalities.

Every norm is a global sup norm of the pointwise g-norm.
"""
import logging
import math
import typing
from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy.special import gammaln

from .argument_validators import RangeValidator
from .coflow import FlowState
from .coflow import GeometryCache
from .coflow import _metric_velocity_h
from .errors import InsufficientData
from .errors import InsufficientTrajectory
from .fields import ConnectionField
from .fields import CurvatureField
from .fields import MetricField
from .fields import TensorField
from .fields import covariant_derivative
from .fields import field_norm
from .fields import hessian
from .fields import iterated_norms
from .fields import levi_civita
from .fields import riemann
from .fields import tensor_norm_squared
from .fields import trace_laplacian
from .g2_algebra import PHI_NORM_SQUARED
from .g2_algebra import PSI_NORM_SQUARED
from .torsion import coclosed_residual
from .validate_args_decorator import validate_args

logger = logging.getLogger(__name__)

FAMILIES = ("a", "b", "c", "d")
# derivative order of the k-th entry is k + offset
_OFFSETS = {"a": 0, "b": 1, "c": 2, "d": 2}


class Geometry(typing.Protocol):
    metric: MetricField
    connection: ConnectionField
    curvature: CurvatureField


@dataclass(frozen=True, eq=False)
class Background:
    """A Riemannian background without a G2-structure, for commutator monitors."""

    metric: MetricField
    connection: ConnectionField
    curvature: CurvatureField


def background_from_metric(metric: MetricField, scheme: typing.Optional[str] = None) -> Background:
    connection = levi_civita(metric, scheme)
    return Background(metric, connection, riemann(metric, connection, scheme))


def _log_factorial(n: int) -> float:
    """log n!, with n! = 1 for n ≤ 0."""
    return float(gammaln(n + 1)) if n > 0 else 0.0


def _sup(values: np.ndarray) -> float:
    return float(np.max(values)) if values.size else 0.0


@dataclass
class LambdaResult:
    field: np.ndarray
    """Pointwise Λ = (|Rm|² + |∇T|² + |T|⁴)^{1/2}."""

    sup: float


def lambda_from_parts(rm_squared: np.ndarray, nabla_t_squared: np.ndarray, t_squared: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(rm_squared + nabla_t_squared + t_squared ** 2, 0.0))


def lambda_field(cache: GeometryCache, scheme: typing.Optional[str] = None) -> LambdaResult:
    """
    Λ at every node and its sup
    """
    metric = cache.metric
    T = cache.torsion.T
    rm_squared = tensor_norm_squared(cache.curvature.riemann.data, (True,) * 4, metric)
    nabla_t = covariant_derivative(T, cache.connection, scheme)
    values = lambda_from_parts(
        rm_squared,
        tensor_norm_squared(nabla_t.data, nabla_t.variance, metric),
        tensor_norm_squared(T.data, T.variance, metric),
    )
    return LambdaResult(values, _sup(values))


@dataclass
class ShiSequences:
    """
    Shi-type sequences at one time, built from sup norms of ∇^j Rm, ∇^j T, ∇^j φ and ∇^j ψ.

    a_k = t^{k/2}‖∇^k Rm‖/(k+1)!, b_k over ∇^{k+1}T, c_k over ∇^{k+2}φ, d_k over ∇^{k+2}ψ, and the tilde
    variants with t^{(k-1)/2}/k!. Negative indices follow the same formulas with n! = 1 for n ≤ 0.
    """

    t: float
    kmax: int
    norms: typing.Dict[str, typing.List[float]]
    """Sup norms by family and derivative order j = 0..kmax + offset."""

    noise_floor: typing.Dict[str, typing.List[bool]]
    unavailable: typing.Dict[str, typing.List[bool]]
    pointwise: typing.Dict[str, typing.List[typing.Optional[np.ndarray]]] = field(default_factory=dict)
    """Pointwise squared norms by family and derivative order, when kept."""

    def entry(self, family: str, k: int, tilde: bool = False) -> float:
        """
        The k-th entry of a family; ``nan`` when its norm is unavailable or t = 0 carries a negative power
        """
        order = k + _OFFSETS[family]
        if order < 0 or order >= len(self.norms[family]):
            raise IndexError(f"{family}_{k} is outside the computed range")
        norm = self.norms[family][order]
        if math.isnan(norm):
            return math.nan
        if norm == 0.0:
            return 0.0
        power = (k - 1) / 2.0 if tilde else k / 2.0
        log_factorial = _log_factorial(k) if tilde else _log_factorial(k + 1)
        if self.t == 0.0:
            if power > 0:
                return 0.0
            if power < 0:
                return math.nan
            return math.exp(math.log(norm) - log_factorial)
        return math.exp(power * math.log(self.t) + math.log(norm) - log_factorial)

    def flagged(self, family: str, k: int) -> bool:
        order = k + _OFFSETS[family]
        return self.noise_floor[family][order] or self.unavailable[family][order]

    def series(self, family: str, tilde: bool = False) -> np.ndarray:
        """Entries k = 0..kmax."""
        return np.array([self.entry(family, k, tilde) for k in range(self.kmax + 1)])

    @property
    def a(self) -> np.ndarray:
        return self.series("a")

    @property
    def b(self) -> np.ndarray:
        return self.series("b")

    @property
    def c(self) -> np.ndarray:
        return self.series("c")

    @property
    def d(self) -> np.ndarray:
        return self.series("d")

    def omega_sum(self, N: int) -> float:
        """
        sup_x Σ_{k≤N} t^k/(k+1)!² Ω_k(x) with Ω_k = |∇^k Rm|² + |∇^{k+1}T|² + |∇^{k+2}φ|² + |∇^{k+2}ψ|²;
        ``nan`` when the pointwise norms were not kept or a level is unavailable
        """
        if not self.pointwise:
            return math.nan
        total: typing.Optional[np.ndarray] = None
        for k in range(N + 1):
            weight = self.t ** k / math.factorial(k + 1) ** 2
            for family in FAMILIES:
                level = self.pointwise[family][k + _OFFSETS[family]]
                if level is None:
                    return math.nan
                total = weight * level if total is None else total + weight * level
        return _sup(total) if total is not None else 0.0

    def negative_entries(self) -> typing.Dict[str, float]:
        """b₋₁, c₋₁, c₋₂, d₋₁, d₋₂ and their tilde versions, keyed like ``c-2`` and ``c~-2``."""
        entries: typing.Dict[str, float] = {}
        for family in ("b", "c", "d"):
            for k in range(-_OFFSETS[family], 0):
                entries[f"{family}{k}"] = self.entry(family, k)
                entries[f"{family}~{k}"] = self.entry(family, k, tilde=True)
        return entries


@validate_args(
    non_negative=["t"],
    validators={"kmax": RangeValidator(0, 4, integer=True)},
)
def shi_sequences(cache: GeometryCache, t: float, kmax: int, scheme: typing.Optional[str] = None) -> ShiSequences:
    """
    Shi sequences up to kmax (≤ 4, so that ∇^{kmax+2}φ stays within the derivative cap)
    """
    sources = {
        "a": cache.curvature.riemann,
        "b": cache.torsion.T,
        "c": cache.phi.to_tensor(),
        "d": cache.psi.to_tensor(),
    }
    norms: typing.Dict[str, typing.List[float]] = {}
    noise: typing.Dict[str, typing.List[bool]] = {}
    unavailable: typing.Dict[str, typing.List[bool]] = {}
    pointwise: typing.Dict[str, typing.List[typing.Optional[np.ndarray]]] = {}
    for family, source in sources.items():
        result = iterated_norms(source, cache.metric, cache.connection, kmax + _OFFSETS[family], scheme)
        norms[family] = result.sup
        noise[family] = result.noise_floor
        unavailable[family] = result.unavailable
        pointwise[family] = result.pointwise
    return ShiSequences(t, kmax, norms, noise, unavailable, pointwise)


@dataclass
class AggregateQuantities:
    """
    Sums of squared Shi entries up to N and the bootstrap quantities Φ_N and Ψ_N.
    """

    N: int
    A_N: float
    B_N: float
    C_N: float
    D_N: float
    A_tilde_N: float
    B_tilde_N: float
    C_tilde_N: float
    D_tilde_N: float
    torsion_squared: float
    Phi_N: float
    """A_N + B_N + C_N + D_N + |T|² + A² + |φ|² + |ψ|²."""

    Psi_N: float
    """Tilde sums from k = 1."""

    Psi_N_from_zero: float
    """Tilde sums from k = 0."""

    omega_sum: float
    """
    sup_x Σ_{k≤N} t^k/(k+1)!² (|∇^k Rm|² + |∇^{k+1}T|² + |∇^{k+2}φ|² + |∇^{k+2}ψ|²), at most the plain sums.
    """

    incomplete: bool = False
    """Whether unavailable entries were left out of the sums."""


def aggregates(seq: ShiSequences, cache: GeometryCache, A: float, N: typing.Optional[int] = None) -> AggregateQuantities:
    """
    Aggregates of a Shi sequence; |φ|² = 42 and |ψ|² = 168 hold for every G2-structure
    """
    N = seq.kmax if N is None else min(N, seq.kmax)
    plain = {f: np.array([seq.entry(f, k) for k in range(N + 1)]) for f in FAMILIES}
    tilde = {f: np.array([seq.entry(f, k, tilde=True) for k in range(N + 1)]) for f in FAMILIES}
    incomplete = any(np.isnan(v).any() for v in plain.values()) or any(np.isnan(v[1:]).any() for v in tilde.values())
    sums = {f: float(np.nansum(plain[f] ** 2)) for f in FAMILIES}
    tilde_sums = {f: float(np.nansum(tilde[f][1:] ** 2)) for f in FAMILIES}
    tilde_zero = sum(float(np.nansum(tilde[f][:1] ** 2)) for f in FAMILIES)
    T = cache.torsion.T
    torsion_squared = _sup(tensor_norm_squared(T.data, T.variance, cache.metric))
    plain_total = sum(sums.values())
    psi_n = sum(tilde_sums.values())
    return AggregateQuantities(
        N=N,
        A_N=sums["a"],
        B_N=sums["b"],
        C_N=sums["c"],
        D_N=sums["d"],
        A_tilde_N=tilde_sums["a"],
        B_tilde_N=tilde_sums["b"],
        C_tilde_N=tilde_sums["c"],
        D_tilde_N=tilde_sums["d"],
        torsion_squared=torsion_squared,
        Phi_N=plain_total + torsion_squared + A ** 2 + PHI_NORM_SQUARED + PSI_NORM_SQUARED,
        Psi_N=psi_n,
        Psi_N_from_zero=psi_n + tilde_zero,
        omega_sum=seq.omega_sum(N),
        incomplete=incomplete,
    )


def p_function(x: int, y: int, z: int, w: int, seq: ShiSequences, t: float, N: typing.Optional[int] = None) -> float:
    """
    P(x, y, z, w) = t^{(x+y+2z+2w)/2} [ (B_N + b₋₁²)^{x/2} (C_N + c₋₁²)^{y/2} (C_N + c₋₁² + c₋₂²)^{z/2}
    (D_N + d₋₁² + d₋₂²)^{w/2} − b₋₁^x c₋₁^y c₋₂^z d₋₂^w ]
    """
    if min(x, y, z, w) < 0:
        raise ValueError("P is defined for nonnegative integers only")
    N = seq.kmax if N is None else min(N, seq.kmax)

    def total(family: str) -> float:
        return float(sum(seq.entry(family, k) ** 2 for k in range(N + 1)))

    b1, c1, c2, d1, d2 = (seq.entry("b", -1), seq.entry("c", -1), seq.entry("c", -2), seq.entry("d", -1), seq.entry("d", -2))
    prefactor = t ** ((x + y + 2 * z + 2 * w) / 2.0)
    sums = (
        (total("b") + b1 ** 2) ** (x / 2.0)
        * (total("c") + c1 ** 2) ** (y / 2.0)
        * (total("c") + c1 ** 2 + c2 ** 2) ** (z / 2.0)
        * (total("d") + d1 ** 2 + d2 ** 2) ** (w / 2.0)
    )
    singles = b1 ** x * c1 ** y * c2 ** z * d2 ** w
    value = prefactor * (sums - singles)
    if value < 0.0 and abs(value) <= 1e-12 * prefactor * abs(sums):
        return 0.0
    return value


def p_function_bound(x: int, y: int, z: int, w: int, agg: AggregateQuantities, t: float) -> float:
    """Σ_{i=1}^{x+y+2z+2w} t^{i/2} Φ_N^{(x+y+z+w)/2}."""
    top = x + y + 2 * z + 2 * w
    return float(sum(t ** (i / 2.0) for i in range(1, top + 1))) * agg.Phi_N ** ((x + y + z + w) / 2.0)


@dataclass
class AnalyticityFit:
    """
    Least-squares fit of log[t^{k/2}(‖∇^k Rm‖ + ‖∇^{k+1}T‖)/(k+1)!] = log C + (k/2) log L.
    """

    C_fit: float
    L_fit: float
    kmax_used: int
    residuals: typing.List[float] = field(default_factory=list)
    consistent: bool = True
    """Whether the mean residual is non-increasing over the upper half of the k range."""

    degenerate: bool = False
    """All entries were zero (flat data); C_fit = 0 and L_fit is meaningless."""

    C_envelope: float = 0.0
    """Smallest C for which the bound holds at every point with the fitted L."""

    n_points: int = 0

    def as_dict(self) -> typing.Dict[str, typing.Any]:
        return asdict(self)


def _fit_log_entries(ks: np.ndarray, values: np.ndarray) -> AnalyticityFit:
    distinct = np.unique(ks)
    if distinct.size < 3:
        raise InsufficientData(f"the fit needs at least 3 usable k entries, got {distinct.size}")
    kmax_used = int(distinct.max())
    positive = values > 0
    if not np.any(positive):
        return AnalyticityFit(0.0, 0.0, kmax_used, [], True, True, 0.0, int(values.size))
    ks, logs = ks[positive], np.log(values[positive])
    if np.unique(ks).size < 2:
        raise InsufficientData("the fit needs nonzero entries at two or more k values")
    design = np.column_stack([np.ones_like(ks, dtype=float), 0.5 * ks])
    (log_c, log_l), *_ = np.linalg.lstsq(design, logs, rcond=None)
    residuals = logs - design @ np.array([log_c, log_l])
    by_k = [float(np.mean(residuals[ks == k])) for k in np.unique(ks)]
    upper = by_k[len(by_k) // 2:]
    consistent = all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(upper, upper[1:]))
    envelope = float(np.exp(np.max(logs - 0.5 * ks * log_l)))
    return AnalyticityFit(
        C_fit=float(np.exp(log_c)),
        L_fit=float(np.exp(log_l)),
        kmax_used=kmax_used,
        residuals=[float(r) for r in residuals],
        consistent=consistent,
        degenerate=False,
        C_envelope=envelope,
        n_points=int(ks.size),
    )


def fit_factorial_bound(
    ks: typing.Sequence[int], ts: typing.Sequence[float], magnitudes: typing.Sequence[float]
) -> AnalyticityFit:
    """
    Fit (C, L) in t^{k/2} M_k ≤ C L^{k/2} (k+1)! from raw magnitudes M_k = ‖∇^k Rm‖ + ‖∇^{k+1}T‖

        Raises:
            InsufficientData: fewer than three distinct k values
    """
    k_array = np.asarray(ks, dtype=float)
    t_array = np.asarray(ts, dtype=float)
    m_array = np.asarray(magnitudes, dtype=float)
    keep = np.isfinite(m_array) & (t_array > 0)
    k_array, t_array, m_array = k_array[keep], t_array[keep], m_array[keep]
    log_fact = np.array([_log_factorial(int(k) + 1) for k in k_array])
    values = np.zeros_like(m_array)
    nonzero = m_array > 0
    values[nonzero] = np.exp(0.5 * k_array[nonzero] * np.log(t_array[nonzero]) + np.log(m_array[nonzero]) - log_fact[nonzero])
    return _fit_log_entries(k_array, values)


def fit_entries(ks: typing.Sequence[int], entries: typing.Sequence[float]) -> AnalyticityFit:
    """Fit (C, L) from precomputed entries a_k + b_k."""
    values = np.asarray(entries, dtype=float)
    k_array = np.asarray(ks, dtype=float)
    keep = np.isfinite(values)
    return _fit_log_entries(k_array[keep], values[keep])


def fit_analyticity(series: typing.Sequence[ShiSequences]) -> AnalyticityFit:
    """
    Fit (C, L) over every unflagged k entry of every sequence with t > 0

        Raises:
            InsufficientData: fewer than three usable k entries
    """
    ks: typing.List[int] = []
    ts: typing.List[float] = []
    magnitudes: typing.List[float] = []
    for seq in series:
        if seq.t <= 0:
            continue
        for k in range(seq.kmax + 1):
            if seq.flagged("a", k) or seq.flagged("b", k):
                continue
            ks.append(k)
            ts.append(seq.t)
            magnitudes.append(seq.norms["a"][k] + seq.norms["b"][k + 1])
    return fit_factorial_bound(ks, ts, magnitudes)


def _reference_scale(M0: float, A: float) -> float:
    return 5376.0 * (M0 + A + 1.0) ** 2


def shi_reference_bound(t: float, M0: float, A: float, C: float) -> float:
    """
    The comparison curve S (1 − 4(C+1) t S⁴)^{−1/4} with S = 5376 (M0 + A + 1)²; infinite past blow-up
    """
    scale = _reference_scale(M0, A)
    remainder = 1.0 - 4.0 * (C + 1.0) * t * scale ** 4
    if remainder <= 0.0:
        return math.inf
    return scale * remainder ** -0.25


def shi_reference_blowup_time(M0: float, A: float, C: float) -> float:
    return 1.0 / (4.0 * (C + 1.0) * _reference_scale(M0, A) ** 4)


def first_exit_time(
    times: typing.Sequence[float], phi_values: typing.Sequence[float], M0: float, A: float, C: float
) -> typing.Optional[float]:
    """First time Φ_N exceeds the comparison curve, ``None`` if it never does."""
    for t, value in zip(times, phi_values):
        if value > shi_reference_bound(t, M0, A, C):
            return float(t)
    return None


@dataclass
class CommutatorReport:
    k: int
    lhs_sup: float
    """sup |∇^k △S − △∇^k S|."""

    rhs_sup: float
    """sup of (p+1) Σ_i (k+2)!/((i+2)!(k−i)!) |∇^i Rm| |∇^{k−i} S|."""

    c_hat: float
    """sup of LHS/RHS over nodes where the RHS is not negligible."""


def _ratio_sup(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = _sup(rhs)
    if scale == 0.0:
        return 0.0 if _sup(lhs) <= 1e-12 else math.inf
    mask = rhs > 1e-12 * scale
    return float(np.max(np.maximum(lhs[mask], 0.0) / rhs[mask]))


def _iterate(f: TensorField, connection: ConnectionField, k: int, scheme: typing.Optional[str]) -> TensorField:
    for _ in range(k):
        f = covariant_derivative(f, connection, scheme)
    return f


@validate_args(validators={"k": RangeValidator(1, 2, integer=True)})
def commutator_monitor(
    S: TensorField, geometry: Geometry, k: int, scheme: typing.Optional[str] = None
) -> CommutatorReport:
    """
    Both sides of |∇^k △S − △∇^k S| ≤ C (p+1) Σ_{i≤k} (k+2)!/((i+2)!(k−i)!) |∇^i Rm| |∇^{k−i} S|
    with C = 1, and the fitted constant
    """
    metric, connection = geometry.metric, geometry.connection
    left = _iterate(trace_laplacian(S, metric, connection, scheme), connection, k, scheme)
    right = trace_laplacian(_iterate(S, connection, k, scheme), metric, connection, scheme)
    difference = TensorField(S.grid, left.data - right.data, left.variance)
    lhs = field_norm(difference, metric)
    rm_levels = [geometry.curvature.riemann]
    s_levels = [S]
    for _ in range(k):
        rm_levels.append(covariant_derivative(rm_levels[-1], connection, scheme))
        s_levels.append(covariant_derivative(s_levels[-1], connection, scheme))
    rhs = np.zeros(S.grid.dims)
    for i in range(k + 1):
        weight = math.factorial(k + 2) / (math.factorial(i + 2) * math.factorial(k - i))
        rhs = rhs + weight * field_norm(rm_levels[i], metric) * field_norm(s_levels[k - i], metric)
    rhs = (S.rank + 1) * rhs
    return CommutatorReport(k, _sup(lhs), _sup(rhs), _ratio_sup(lhs, rhs))


def ricci_identity_residual(S: TensorField, geometry: Geometry, scheme: typing.Optional[str] = None) -> float:
    """‖∇_i∇_j S_m − ∇_j∇_i S_m + R_ijm^p S_p‖∞ for a 1-form S."""
    if S.variance != (True,):
        raise ValueError("the Ricci identity monitor expects a 1-form")
    second = hessian(S, geometry.connection, scheme).data
    commutator = second - np.swapaxes(second, -3, -2)
    curvature = np.einsum("...ijmp,...p->...ijm", geometry.curvature.riemann_up.data, S.data)
    return float(np.max(np.abs(commutator + curvature)))


@dataclass
class TimeCommutatorReport:
    k: int
    times: typing.List[float]
    lhs_sup: typing.List[float]
    """sup |∂t ∇^k S − ∇^k ∂t S| at each interior snapshot."""

    rhs_sup: typing.List[float]
    """sup of (p+1) Σ_{1≤i≤k} (k+1)!/((i+1)!(k−i)!) |∇^i h| |∇^{k−i} S|."""

    c_hat: float


def _time_commutator(
    before: FlowState,
    state: FlowState,
    after: FlowState,
    k: int,
    S: typing.Optional[TensorField],
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Pointwise sides of the time commutator at the middle snapshot. S defaults to each snapshot's torsion;
    a given S keeps its components fixed in time.
    """
    snapshots = (before, state, after)
    weights = _three_point_weights(before.t, state.t, after.t)
    fields = [S if S is not None else s.cache.torsion.T for s in snapshots]
    connection, metric, scheme = state.cache.connection, state.cache.metric, state.scheme
    rate_of_derivative = np.zeros(())
    rate_data = np.zeros(())
    for w, f, s in zip(weights, fields, snapshots):
        rate_of_derivative = rate_of_derivative + w * _iterate(f, s.cache.connection, k, scheme).data
        rate_data = rate_data + w * f.data
    rate = TensorField(state.psi.grid, rate_data, fields[1].variance)
    derivative_of_rate = _iterate(rate, connection, k, scheme)
    difference = TensorField(state.psi.grid, rate_of_derivative - derivative_of_rate.data, derivative_of_rate.variance)
    lhs = field_norm(difference, metric)

    h_levels = [TensorField.covariant(state.psi.grid, _metric_velocity_h(state.cache, state.A))]
    s_levels = [fields[1]]
    for _ in range(k):
        h_levels.append(covariant_derivative(h_levels[-1], connection, scheme))
        s_levels.append(covariant_derivative(s_levels[-1], connection, scheme))
    rhs = np.zeros(state.psi.grid.dims)
    for i in range(1, k + 1):
        weight = math.factorial(k + 1) / (math.factorial(i + 1) * math.factorial(k - i))
        rhs = rhs + weight * field_norm(h_levels[i], metric) * field_norm(s_levels[k - i], metric)
    return lhs, (fields[1].rank + 1) * rhs


@validate_args(validators={"k": RangeValidator(1, 2, integer=True)})
def time_commutator_monitor(
    states: typing.Sequence[FlowState], k: int, S: typing.Optional[TensorField] = None
) -> TimeCommutatorReport:
    """
    Both sides of |∂t ∇^k S − ∇^k ∂t S| ≤ C (p+1) Σ_{1≤i≤k} (k+1)!/((i+1)!(k−i)!) |∇^i h| |∇^{k−i} S| at every
    interior snapshot, with ∂t taken as a three-point difference along the trajectory

        Raises:
            InsufficientTrajectory: fewer than three snapshots
    """
    if len(states) < 3:
        raise InsufficientTrajectory(f"the time commutator needs at least 3 snapshots, got {len(states)}")
    report = TimeCommutatorReport(k, [], [], [], 0.0)
    for before, state, after in zip(states, states[1:], states[2:]):
        lhs, rhs = _time_commutator(before, state, after, k, S)
        report.times.append(state.t)
        report.lhs_sup.append(_sup(lhs))
        report.rhs_sup.append(_sup(rhs))
        report.c_hat = max(report.c_hat, _ratio_sup(lhs, rhs))
    return report


@dataclass
class EvolutionReport:
    """
    Monitors evaluated at the interior snapshots of a trajectory.
    """

    times: typing.List[float]
    metric_velocity_residuals: typing.List[float]
    """‖∂t g − 2h‖∞ with ∂t g from a three-point difference."""

    torsion_lhs_sup: typing.List[float]
    """sup of (∂t − △)|T|²."""

    torsion_rhs_sup: typing.List[float]
    """sup of |Rm||T|² + A²|T|² + A|T|³ + |T|⁴."""

    torsion_c_hat: float
    torsion_inequality_holds: bool
    """Whether the LHS is negligible wherever the RHS vanishes."""

    torsion_growth_constant: float
    """max of |d‖T‖∞/dt| / (Λ^{3/2} + AΛ + A²Λ^{1/2})."""

    curvature_growth_constant: float
    """max of |d‖Rm‖∞/dt| / (Λ² + AΛ^{3/2} + A²Λ)."""

    time_commutator_lhs_sup: typing.List[float] = field(default_factory=list)
    """sup |∂t ∇T − ∇ ∂t T|."""

    time_commutator_rhs_sup: typing.List[float] = field(default_factory=list)
    time_commutator_c_hat: float = 0.0

    @property
    def metric_velocity_sup(self) -> float:
        return max(self.metric_velocity_residuals) if self.metric_velocity_residuals else 0.0


def _three_point_weights(t0: float, t1: float, t2: float) -> typing.Tuple[float, float, float]:
    """Weights of the second-order derivative at t1 from samples at t0 < t1 < t2."""
    h1, h2 = t1 - t0, t2 - t1
    return -h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))


def _growth_ratio(rate: float, bound: float) -> float:
    if bound > 0:
        return rate / bound
    return 0.0 if rate <= 1e-12 else math.inf


def evolution_monitors(states: typing.Sequence[FlowState]) -> EvolutionReport:
    """
    Metric-velocity consistency, the |T|² evolution inequality, growth-rate constants and the k = 1 time
    commutator of the torsion

        Raises:
            InsufficientTrajectory: fewer than three snapshots
    """
    if len(states) < 3:
        raise InsufficientTrajectory(f"evolution monitors need at least 3 snapshots, got {len(states)}")
    report = EvolutionReport([], [], [], [], 0.0, True, 0.0, 0.0)
    for before, state, after in zip(states, states[1:], states[2:]):
        w0, w1, w2 = _three_point_weights(before.t, state.t, after.t)
        metric = state.cache.metric
        dg = w0 * before.cache.metric.g + w1 * metric.g + w2 * after.cache.metric.g
        h = _metric_velocity_h(state.cache, state.A)
        report.times.append(state.t)
        report.metric_velocity_residuals.append(float(np.max(np.abs(dg - 2.0 * h))))

        squared = _torsion_squared(state)
        rate = w0 * _torsion_squared(before) + w1 * squared + w2 * _torsion_squared(after)
        laplacian = trace_laplacian(TensorField(state.psi.grid, squared, ()), metric, state.cache.connection, state.scheme)
        lhs = rate - laplacian.data
        norm_t = np.sqrt(np.maximum(squared, 0.0))
        norm_rm = np.sqrt(np.maximum(tensor_norm_squared(state.cache.curvature.riemann.data, (True,) * 4, metric), 0.0))
        A = state.A
        rhs = norm_rm * squared + A ** 2 * squared + A * norm_t ** 3 + squared ** 2
        report.torsion_lhs_sup.append(_sup(lhs))
        report.torsion_rhs_sup.append(_sup(rhs))
        report.torsion_c_hat = max(report.torsion_c_hat, _ratio_sup(lhs, rhs))
        negligible = rhs <= 1e-12 * max(_sup(rhs), 1.0)
        if np.any(lhs[negligible] > 1e-8):
            report.torsion_inequality_holds = False

        lam = lambda_field(state.cache, state.scheme).sup
        dt = after.t - before.t
        t_rate = abs(_torsion_sup(after) - _torsion_sup(before)) / dt
        rm_rate = abs(_curvature_sup(after) - _curvature_sup(before)) / dt
        report.torsion_growth_constant = max(
            report.torsion_growth_constant, _growth_ratio(t_rate, lam ** 1.5 + A * lam + A ** 2 * lam ** 0.5)
        )
        report.curvature_growth_constant = max(
            report.curvature_growth_constant, _growth_ratio(rm_rate, lam ** 2 + A * lam ** 1.5 + A ** 2 * lam)
        )

        commutator_lhs, commutator_rhs = _time_commutator(before, state, after, 1, None)
        report.time_commutator_lhs_sup.append(_sup(commutator_lhs))
        report.time_commutator_rhs_sup.append(_sup(commutator_rhs))
        report.time_commutator_c_hat = max(report.time_commutator_c_hat, _ratio_sup(commutator_lhs, commutator_rhs))
    return report


def _torsion_squared(state: FlowState) -> np.ndarray:
    T = state.cache.torsion.T
    return tensor_norm_squared(T.data, T.variance, state.cache.metric)


def _torsion_sup(state: FlowState) -> float:
    return _sup(field_norm(state.cache.torsion.T, state.cache.metric))


def _curvature_sup(state: FlowState) -> float:
    return _sup(field_norm(state.cache.curvature.riemann, state.cache.metric))


def diagnostics_row(
    state: FlowState,
    kmax: int,
    shi_columns: bool = True,
    companion: typing.Optional[FlowState] = None,
    wall_time: float = 0.0,
) -> typing.Dict[str, float]:
    """
    One time-series row: t, ‖dψ‖∞, sup Λ, ‖T‖∞, min eigenvalue of g, Φ_N, Ψ_N, optionally the Shi entries
    a_k and b_k, the distance to a companion state of the other route and the wall time
    """
    cache = state.cache
    seq = shi_sequences(cache, state.t, kmax, state.scheme)
    agg = aggregates(seq, cache, state.A)
    row: typing.Dict[str, float] = {
        "t": state.t,
        "step": float(state.step_index),
        "dpsi_sup": coclosed_residual(state.psi, state.scheme),
        "lambda_sup": lambda_field(cache, state.scheme).sup,
        "T_sup": _sup(field_norm(cache.torsion.T, cache.metric)),
        "g_min_eig": cache.metric.min_eigenvalue(),
        "Phi_N": agg.Phi_N,
        "Psi_N": agg.Psi_N,
    }
    if shi_columns:
        for k, value in enumerate(seq.a):
            row[f"a_{k}"] = float(value)
        for k, value in enumerate(seq.b):
            row[f"b_{k}"] = float(value)
    if companion is not None:
        row["route_discrepancy"] = (state.psi - companion.psi).max_abs()
    row["wall_time"] = wall_time
    return row
