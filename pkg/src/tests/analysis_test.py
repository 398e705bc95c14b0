import itertools
import math
import unittest
from dataclasses import dataclass
from typing import List

import numpy as np
from g2_coflow.analysis import FAMILIES
from g2_coflow.analysis import ShiSequences
from g2_coflow.analysis import aggregates
from g2_coflow.analysis import background_from_metric
from g2_coflow.analysis import commutator_monitor
from g2_coflow.analysis import diagnostics_row
from g2_coflow.analysis import evolution_monitors
from g2_coflow.analysis import first_exit_time
from g2_coflow.analysis import fit_analyticity
from g2_coflow.analysis import fit_entries
from g2_coflow.analysis import fit_factorial_bound
from g2_coflow.analysis import lambda_field
from g2_coflow.analysis import p_function
from g2_coflow.analysis import p_function_bound
from g2_coflow.analysis import ricci_identity_residual
from g2_coflow.analysis import shi_reference_blowup_time
from g2_coflow.analysis import shi_reference_bound
from g2_coflow.analysis import shi_sequences
from g2_coflow.analysis import time_commutator_monitor
from g2_coflow.coflow import initial_state
from g2_coflow.coflow import run
from g2_coflow.errors import InsufficientData
from g2_coflow.errors import InsufficientTrajectory
from g2_coflow.errors import InvalidArgument
from g2_coflow.fields import MetricField
from g2_coflow.fields import TensorField
from g2_coflow.initial_data import flat_psi
from g2_coflow.lab_config import LabConfig
from tests import factorial_magnitudes
from tests import line_grid
from tests import perturbed_psi
from tests import perturbed_state
from tests import smooth_components
from tests import warped_metric


def _synthetic_sequences(t: float, seed: int) -> ShiSequences:
    rng = np.random.default_rng(seed)
    lengths = {"a": 3, "b": 4, "c": 5, "d": 5}
    return ShiSequences(
        t=t,
        kmax=2,
        norms={family: list(rng.uniform(0.1, 2.0, n)) for family, n in lengths.items()},
        noise_floor={family: [False] * n for family, n in lengths.items()},
        unavailable={family: [False] * n for family, n in lengths.items()},
    )


class TestShiSequences(unittest.TestCase):
    def setUp(self):
        LabConfig.set_max_tensor_elements(5_000_000)

    def tearDown(self):
        LabConfig.reset()

    def test_flat_structure(self):
        A = 1.5
        state = initial_state(flat_psi(line_grid(8)), A)
        seq = shi_sequences(state.cache, 1.0, 1)
        for family in ("a", "b", "c"):
            with self.subTest(f"family {family}"):
                self.assertLessEqual(float(np.max(np.abs(getattr(seq, family)))), 1e-12)
        agg = aggregates(seq, state.cache, A)
        self.assertAlmostEqual(agg.Phi_N, A ** 2 + 42.0 + 168.0, delta=1e-10)
        self.assertLessEqual(agg.Psi_N, 1e-20)
        self.assertLessEqual(lambda_field(state.cache).sup, 1e-12)
        negative = seq.negative_entries()
        self.assertAlmostEqual(negative["c-2"], math.sqrt(42.0), delta=1e-12)
        self.assertAlmostEqual(negative["c~-2"], math.sqrt(42.0), delta=1e-12)
        self.assertAlmostEqual(negative["d-2"], math.sqrt(168.0), delta=1e-12)

    def test_negative_powers_at_time_zero(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        seq = shi_sequences(state.cache, 0.0, 1)
        negative = seq.negative_entries()
        for key in ("c-2", "c~-2", "d-2", "d~-2"):
            with self.subTest(key):
                self.assertTrue(math.isnan(negative[key]))

    def test_negative_entries_scale_with_t(self):
        @dataclass
        class TestCase:
            description: str
            key: str
            expected: float

        seq = shi_sequences(initial_state(flat_psi(line_grid(8)), 1.0).cache, 4.0, 1)
        negative = seq.negative_entries()
        test_cases = [
            TestCase(description="c-2 carries 1/t", key="c-2", expected=math.sqrt(42.0) / 4.0),
            TestCase(description="c~-2 carries t^(-3/2)", key="c~-2", expected=math.sqrt(42.0) / 8.0),
            TestCase(description="d-2 carries 1/t", key="d-2", expected=math.sqrt(168.0) / 4.0),
            TestCase(description="d~-2 carries t^(-3/2)", key="d~-2", expected=math.sqrt(168.0) / 8.0),
        ]
        for test_case in test_cases:
            with self.subTest(test_case.description):
                self.assertAlmostEqual(negative[test_case.key], test_case.expected, delta=1e-12)

    def test_unavailable_levels_are_nan(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        seq = shi_sequences(state.cache, 1.0, 1)
        self.assertTrue(seq.unavailable["d"][3])
        self.assertTrue(math.isnan(seq.entry("d", 1)))
        self.assertTrue(seq.flagged("d", 1))
        agg = aggregates(seq, state.cache, 1.0)
        self.assertTrue(agg.incomplete)
        self.assertTrue(math.isnan(agg.omega_sum))
        self.assertRaises(IndexError, lambda: seq.entry("a", 2))

    def test_perturbed_sequences(self):
        state = perturbed_state()
        seq = shi_sequences(state.cache, 0.5, 2)
        self.assertTrue(np.all(seq.a > 0))
        self.assertTrue(np.all(seq.b > 0))
        agg = aggregates(seq, state.cache, state.A)
        self.assertGreater(agg.Phi_N, state.A ** 2 + 210.0)
        self.assertGreaterEqual(agg.Psi_N_from_zero, agg.Psi_N)
        fit = fit_analyticity([shi_sequences(state.cache, 0.0, 2), seq])
        self.assertEqual(fit.kmax_used, 2)
        self.assertEqual(fit.n_points, 3)
        self.assertGreater(fit.C_fit, 0.0)
        self.assertGreaterEqual(fit.C_envelope, fit.C_fit * (1.0 - 1e-12))

    def test_omega_sum_is_a_pointwise_sup(self):
        LabConfig.set_max_tensor_elements(7_000_000)
        state = initial_state(perturbed_psi(8, 1e-2), 1.0)
        seq = shi_sequences(state.cache, 0.5, 1)
        agg = aggregates(seq, state.cache, state.A)
        largest_entry = max(seq.entry(family, k) ** 2 for family in FAMILIES for k in range(2))
        self.assertGreaterEqual(agg.omega_sum, largest_entry * (1.0 - 1e-12))
        self.assertLessEqual(agg.omega_sum, (agg.A_N + agg.B_N + agg.C_N + agg.D_N) * (1.0 + 1e-12))
        self.assertTrue(math.isnan(_synthetic_sequences(0.5, 0).omega_sum(2)))

    def test_invalid_arguments(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        self.assertRaises(InvalidArgument, lambda: shi_sequences(state.cache, -1.0, 1))
        self.assertRaises(InvalidArgument, lambda: shi_sequences(state.cache, 1.0, 5))


class TestPFunction(unittest.TestCase):
    def test_flat_structure_gives_zero(self):
        LabConfig.set_max_tensor_elements(5_000_000)
        try:
            state = initial_state(flat_psi(line_grid(8)), 1.0)
            seq = shi_sequences(state.cache, 1.0, 1)
        finally:
            LabConfig.reset()
        for x, y in itertools.product(range(3), repeat=2):
            with self.subTest(f"P({x}, {y}, 0, 0)"):
                self.assertLessEqual(abs(p_function(x, y, 0, 0, seq, 1.0)), 1e-12)

    def test_nonnegative_on_synthetic_sequences(self):
        for seed in range(5):
            seq = _synthetic_sequences(0.7, seed)
            for x, y, z, w in itertools.product(range(3), repeat=4):
                with self.subTest(f"seed {seed}, P({x}, {y}, {z}, {w})"):
                    self.assertGreaterEqual(p_function(x, y, z, w, seq, seq.t), 0.0)

    def test_bound_grows_with_phi(self):
        LabConfig.set_max_tensor_elements(5_000_000)
        try:
            state = initial_state(flat_psi(line_grid(8)), 2.0)
            agg = aggregates(shi_sequences(state.cache, 1.0, 1), state.cache, 2.0)
        finally:
            LabConfig.reset()
        self.assertAlmostEqual(p_function_bound(1, 0, 0, 0, agg, 1.0), math.sqrt(agg.Phi_N), delta=1e-10)
        self.assertAlmostEqual(p_function_bound(0, 0, 1, 0, agg, 4.0), (2.0 + 4.0) * math.sqrt(agg.Phi_N), delta=1e-9)

    def test_negative_exponent(self):
        self.assertRaises(ValueError, lambda: p_function(-1, 0, 0, 0, _synthetic_sequences(1.0, 0), 1.0))


class TestAnalyticityFit(unittest.TestCase):
    def test_synthetic_factorial_data(self):
        @dataclass
        class TestCase:
            description: str
            C: float
            L: float
            t: float

        for test_case in [
            TestCase(description="unit time", C=3.0, L=2.0, t=1.0),
            TestCase(description="early time", C=0.5, L=7.0, t=0.05),
        ]:
            with self.subTest(test_case.description):
                ks = list(range(7))
                magnitudes = factorial_magnitudes(test_case.C, test_case.L, ks, test_case.t)
                fit = fit_factorial_bound(ks, [test_case.t] * len(ks), magnitudes)
                self.assertAlmostEqual(fit.C_fit, test_case.C, delta=1e-9 * test_case.C)
                self.assertAlmostEqual(fit.L_fit, test_case.L, delta=1e-9 * test_case.L)
                self.assertAlmostEqual(fit.C_envelope, test_case.C, delta=1e-9 * test_case.C)
                self.assertTrue(fit.consistent)
                self.assertFalse(fit.degenerate)
                self.assertEqual(fit.kmax_used, 6)

    def test_fit_entries(self):
        @dataclass
        class TestCase:
            description: str
            ks: List[int]
            entries: List[float]
            error: bool = False
            degenerate: bool = False
            consistent: bool = True

        for test_case in [
            TestCase(description="two k values", ks=[0, 1], entries=[1.0, 2.0], error=True),
            TestCase(description="repeated k values", ks=[0, 1, 1], entries=[1.0, 2.0, 3.0], error=True),
            TestCase(description="non-finite entries dropped", ks=[0, 1, 2], entries=[1.0, 2.0, math.nan], error=True),
            TestCase(description="flat data", ks=[0, 1, 2], entries=[0.0, 0.0, 0.0], degenerate=True),
            TestCase(description="geometric data", ks=[0, 1, 2, 3], entries=[1.0, 2.0, 4.0, 8.0]),
            TestCase(
                description="late growth",
                ks=[0, 1, 2, 3, 4, 5],
                entries=[1.0, 1.0, 1.0, 1.0, 1.0, math.exp(5.0)],
                consistent=False,
            ),
        ]:
            with self.subTest(test_case.description):
                if test_case.error:
                    self.assertRaises(InsufficientData, lambda: fit_entries(test_case.ks, test_case.entries))
                    continue
                fit = fit_entries(test_case.ks, test_case.entries)
                self.assertEqual(fit.degenerate, test_case.degenerate)
                self.assertEqual(fit.consistent, test_case.consistent)
                self.assertIn("C_envelope", fit.as_dict())

    def test_sequences_at_time_zero_are_skipped(self):
        self.assertRaises(InsufficientData, lambda: fit_analyticity([_synthetic_sequences(0.0, 1)]))
        fit = fit_analyticity([_synthetic_sequences(0.3, 1), _synthetic_sequences(0.6, 2)])
        self.assertEqual(fit.n_points, 6)


class TestReferenceCurve(unittest.TestCase):
    def test_reference_bound(self):
        self.assertAlmostEqual(shi_reference_bound(0.0, 1.0, 1.0, 0.0), 5376.0 * 9.0)
        blowup = shi_reference_blowup_time(0.0, 0.0, 0.0)
        self.assertAlmostEqual(blowup, 1.0 / (4.0 * 5376.0 ** 4), delta=1e-30)
        self.assertTrue(math.isinf(shi_reference_bound(1.01 * blowup, 0.0, 0.0, 0.0)))
        self.assertGreater(shi_reference_bound(0.5 * blowup, 0.0, 0.0, 0.0), 5376.0)

    def test_first_exit_time(self):
        times = [0.0, 1e-17, 2e-17]
        self.assertIsNone(first_exit_time(times, [1.0, 1.0, 1.0], 0.0, 0.0, 0.0))
        self.assertEqual(first_exit_time(times, [1.0, 1e20, 1e20], 0.0, 0.0, 0.0), 1e-17)


class TestCommutators(unittest.TestCase):
    def test_flat_background(self):
        grid = line_grid(16)
        S = TensorField.covariant(grid, smooth_components(grid, 7, seed=8))
        background = background_from_metric(MetricField.flat(grid))
        for k in (1, 2):
            with self.subTest(f"k = {k}"):
                report = commutator_monitor(S, background, k)
                self.assertEqual(report.k, k)
                self.assertLessEqual(report.lhs_sup, 1e-10)
        self.assertRaises(InvalidArgument, lambda: commutator_monitor(S, background, 3))

    def test_warped_background(self):
        grid = line_grid(32)
        S = TensorField.covariant(grid, smooth_components(grid, 7, seed=9))
        background = background_from_metric(warped_metric(grid))
        self.assertLessEqual(ricci_identity_residual(S, background), 1e-8)
        for k in (1, 2):
            with self.subTest(f"k = {k}"):
                report = commutator_monitor(S, background, k)
                self.assertGreater(report.lhs_sup, 1e-6)
                self.assertGreater(report.rhs_sup, 0.0)
                self.assertTrue(math.isfinite(report.c_hat))

    def test_fitted_constant_under_grid_doubling(self):
        for k in (1, 2):
            with self.subTest(f"k = {k}"):
                constants = []
                for n in (16, 32):
                    grid = line_grid(n)
                    S = TensorField.covariant(grid, smooth_components(grid, 7, seed=9))
                    constants.append(commutator_monitor(S, background_from_metric(warped_metric(grid)), k).c_hat)
                self.assertGreater(min(constants), 0.0)
                self.assertLess(max(constants), 2.0 * min(constants))

    def test_ricci_identity_needs_a_one_form(self):
        grid = line_grid(8)
        S = TensorField.covariant(grid, np.zeros(grid.dims + (7, 7)))
        self.assertRaises(ValueError, lambda: ricci_identity_residual(S, background_from_metric(MetricField.flat(grid))))


class TestEvolutionMonitors(unittest.TestCase):
    def test_needs_three_snapshots(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        self.assertRaises(InsufficientTrajectory, lambda: evolution_monitors([state, state]))

    def test_flat_trajectory(self):
        trajectory = run(initial_state(flat_psi(line_grid(8)), 1.0), t_end=3e-2, fixed_dt=1e-2)
        report = evolution_monitors(trajectory.states)
        self.assertEqual(len(report.times), 2)
        self.assertLessEqual(report.metric_velocity_sup, 1e-10)
        self.assertTrue(report.torsion_inequality_holds)
        self.assertLessEqual(max(report.torsion_lhs_sup), 1e-10)

    def test_perturbed_trajectory(self):
        state = initial_state(perturbed_psi(16, 1e-3), 1.0)
        trajectory = run(state, t_end=3e-3, fixed_dt=1e-3)
        report = evolution_monitors(trajectory.states)
        self.assertLessEqual(report.metric_velocity_sup, 1e-6)
        self.assertTrue(math.isfinite(report.torsion_growth_constant))
        self.assertTrue(math.isfinite(report.curvature_growth_constant))
        self.assertEqual(len(report.time_commutator_lhs_sup), len(report.times))
        self.assertGreater(min(report.time_commutator_lhs_sup), 0.0)
        self.assertTrue(math.isfinite(report.time_commutator_c_hat))

    def test_metric_velocity_residual_is_second_order_in_dt(self):
        dt = 0.03
        state = initial_state(perturbed_psi(16, 1e-2), 1.0)
        states = run(state, t_end=2.0 * dt, fixed_dt=0.5 * dt).states
        self.assertEqual(len(states), 5)
        coarse = evolution_monitors([states[0], states[2], states[4]]).metric_velocity_residuals[0]
        fine = evolution_monitors(states[1:4]).metric_velocity_residuals[0]
        self.assertGreaterEqual(coarse / fine, 3.5)
        self.assertLessEqual(coarse / fine, 4.5)

    def test_torsion_constant_under_grid_doubling(self):
        constants = []
        for n in (16, 32):
            state = initial_state(perturbed_psi(n, 1e-2), 1.0)
            report = evolution_monitors(run(state, t_end=6e-3, fixed_dt=2e-3).states)
            self.assertTrue(report.torsion_inequality_holds)
            constants.append(report.torsion_c_hat)
        self.assertTrue(all(math.isfinite(c) for c in constants))
        self.assertLessEqual(max(constants), 2.0 * min(constants))


class TestTimeCommutator(unittest.TestCase):
    def test_flat_trajectory(self):
        grid = line_grid(8)
        trajectory = run(initial_state(flat_psi(grid), 1.0), t_end=3e-2, fixed_dt=1e-2)
        S = TensorField.covariant(grid, smooth_components(grid, 7, seed=3))
        for k in (1, 2):
            for description, source in (("fixed 1-form", S), ("torsion", None)):
                with self.subTest(f"{description}, k = {k}"):
                    report = time_commutator_monitor(trajectory.states, k, source)
                    self.assertEqual(report.times, trajectory.times[1:-1])
                    self.assertLessEqual(max(report.lhs_sup), 1e-10)

    def test_perturbed_trajectory(self):
        state = initial_state(perturbed_psi(16, 1e-3), 1.0)
        trajectory = run(state, t_end=3e-3, fixed_dt=1e-3)
        for k in (1, 2):
            with self.subTest(f"k = {k}"):
                report = time_commutator_monitor(trajectory.states, k)
                self.assertEqual(len(report.lhs_sup), 2)
                self.assertGreater(min(report.lhs_sup), 0.0)
                self.assertGreater(min(report.rhs_sup), 0.0)
                self.assertTrue(math.isfinite(report.c_hat))

    def test_invalid_arguments(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        self.assertRaises(InsufficientTrajectory, lambda: time_commutator_monitor([state, state], 1))
        self.assertRaises(InvalidArgument, lambda: time_commutator_monitor([state, state, state], 3))


class TestDiagnosticsRow(unittest.TestCase):
    def setUp(self):
        LabConfig.set_max_tensor_elements(5_000_000)

    def tearDown(self):
        LabConfig.reset()

    def test_flat_row(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        row = diagnostics_row(state, 1, companion=state, wall_time=0.25)
        self.assertEqual(
            list(row),
            ["t", "step", "dpsi_sup", "lambda_sup", "T_sup", "g_min_eig", "Phi_N", "Psi_N",
             "a_0", "a_1", "b_0", "b_1", "route_discrepancy", "wall_time"],
        )
        self.assertAlmostEqual(row["g_min_eig"], 1.0, delta=1e-12)
        self.assertAlmostEqual(row["Phi_N"], 211.0, delta=1e-10)
        self.assertEqual(row["route_discrepancy"], 0.0)
        self.assertEqual(row["wall_time"], 0.25)
        self.assertNotIn("a_0", diagnostics_row(state, 1, shi_columns=False))
