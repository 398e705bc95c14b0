import math
import unittest
from dataclasses import dataclass

import numpy as np
from g2_coflow.coflow import initial_state
from g2_coflow.coflow import metric_velocity
from g2_coflow.coflow import psi_rate_direct
from g2_coflow.coflow import refresh_geometry
from g2_coflow.coflow import route_discrepancy
from g2_coflow.coflow import run
from g2_coflow.coflow import stable_dt
from g2_coflow.coflow import step
from g2_coflow.coflow import velocity
from g2_coflow.errors import InvalidArgument
from g2_coflow.errors import StabilityViolation
from g2_coflow.exterior_calculus import hodge_star_field
from g2_coflow.initial_data import flat_psi
from g2_coflow.initial_data import perturbation_psi
from g2_coflow.initial_data import reparametrized_flat_psi
from g2_coflow.lab_config import LabConfig
from g2_coflow.torsion import coclosed_residual
from tests import line_grid
from tests import perturbed_psi
from tests import perturbed_state

# ‖velocity rate − direct rate‖∞ ≤ ROUTE_GRID_CONSTANT (h⁴ + solver tolerance)
ROUTE_GRID_CONSTANT = 1.0


class TestFlowRates(unittest.TestCase):
    def test_flat_structure_is_a_fixed_point(self):
        @dataclass
        class TestCase:
            description: str
            A: float
            route: str

        psi0 = flat_psi(line_grid(8))
        for test_case in [
            TestCase(description="A = 0.5, direct rate", A=0.5, route="direct"),
            TestCase(description="A = 1, direct rate", A=1.0, route="direct"),
            TestCase(description="A = 2, direct rate", A=2.0, route="direct"),
            TestCase(description="A = 0.5, velocity rate", A=0.5, route="velocity"),
            TestCase(description="A = 2, velocity rate", A=2.0, route="velocity"),
        ]:
            with self.subTest(test_case.description):
                state = initial_state(psi0, test_case.A, test_case.route)
                self.assertLessEqual(psi_rate_direct(state).max_abs(), 1e-12)
                self.assertLessEqual(velocity(state).psi_rate.max_abs(), 1e-12)
                trajectory = run(state, t_end=1.0, integrator="rk4", fixed_dt=1e-2, keep_every=0)
                self.assertEqual(trajectory.final.step_index, 100)
                self.assertLessEqual((trajectory.final.psi - psi0).max_abs(), 1e-10)

    def test_reparametrized_flat_structure_does_not_move(self):
        state = initial_state(reparametrized_flat_psi(line_grid(32), 0.1), 1.0)
        self.assertLessEqual(psi_rate_direct(state).max_abs(), 1e-8)
        self.assertLessEqual(velocity(state).psi_rate.max_abs(), 1e-8)
        self.assertLessEqual(metric_velocity(state).max_abs(), 1e-8)

    def test_velocity_route_matches_direct_route(self):
        state = perturbed_state()
        self.assertGreater(psi_rate_direct(state).max_abs(), 1e-5)
        self.assertLessEqual(route_discrepancy(state), 1e-8)

    def test_route_consistency_is_bounded_by_the_grid(self):
        @dataclass
        class TestCase:
            description: str
            scheme: str

        tolerance = LabConfig.phi_tolerance()
        for test_case in [
            TestCase(description="spectral derivatives", scheme="spectral"),
            TestCase(description="fourth-order differences", scheme="fd4"),
        ]:
            with self.subTest(test_case.description):
                discrepancies = []
                for n in (16, 32):
                    grid = line_grid(n)
                    psi = perturbation_psi(grid, 1e-2, [1, 2], 42, [0], test_case.scheme)
                    discrepancy = route_discrepancy(initial_state(psi, 1.5, scheme=test_case.scheme))
                    self.assertLessEqual(discrepancy, ROUTE_GRID_CONSTANT * (grid.min_spacing ** 4 + tolerance))
                    discrepancies.append(discrepancy)
                if test_case.scheme == "fd4":
                    self.assertGreaterEqual(discrepancies[0] / discrepancies[1], 8.0)

    def test_metric_velocity_is_symmetric(self):
        state = perturbed_state()
        h = velocity(state).h.data
        np.testing.assert_array_equal(h, np.swapaxes(h, -1, -2))
        np.testing.assert_allclose(metric_velocity(state).data, 2.0 * h)


class TestTimeStepping(unittest.TestCase):
    def test_stable_dt(self):
        grid = line_grid(8)
        state = initial_state(flat_psi(grid), 1.0)
        self.assertAlmostEqual(stable_dt(state), 0.1 * (2.0 * math.pi / 8) ** 2)
        self.assertAlmostEqual(stable_dt(state, c_cfl=0.5), 0.5 * (2.0 * math.pi / 8) ** 2)
        perturbed = perturbed_state()
        h_sup = float(np.max(np.abs(velocity(perturbed).h.data)))
        expected = 0.1 * (2.0 * math.pi / 32) ** 2 / max(1.0, h_sup)
        self.assertAlmostEqual(stable_dt(perturbed), expected)

    def test_run_lands_on_t_end(self):
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        trajectory = run(state, t_end=0.05, fixed_dt=0.02)
        self.assertTrue(trajectory.completed)
        self.assertEqual(trajectory.final.step_index, 3)
        self.assertAlmostEqual(trajectory.final.t, 0.05, delta=1e-15)
        self.assertEqual(len(trajectory.states), 4)
        thinned = run(state, t_end=0.05, fixed_dt=0.02, keep_every=0)
        self.assertEqual(thinned.times[0], 0.0)
        self.assertEqual(len(thinned.states), 2)

    def test_integrators_converge_at_their_order(self):
        @dataclass
        class TestCase:
            description: str
            integrator: str
            t_end: float
            lowest: float
            highest: float

        state = initial_state(perturbed_psi(8, 1e-2), 1.0)
        for test_case in [
            TestCase(description="rk4 is fourth order", integrator="rk4", t_end=0.2, lowest=3.5, highest=5.0),
            TestCase(description="euler is first order", integrator="euler", t_end=0.05, lowest=0.8, highest=1.2),
        ]:
            with self.subTest(test_case.description):
                finals = []
                for n in (4, 8, 16):
                    dt = test_case.t_end / n
                    finals.append(run(state, t_end=test_case.t_end, integrator=test_case.integrator, fixed_dt=dt, keep_every=0).final)
                coarse = (finals[0].psi - finals[1].psi).max_abs()
                fine = (finals[1].psi - finals[2].psi).max_abs()
                order = math.log2(coarse / fine)
                self.assertGreaterEqual(order, test_case.lowest)
                self.assertLessEqual(order, test_case.highest)

    def test_on_step_sees_every_state(self):
        seen = []
        state = initial_state(flat_psi(line_grid(8)), 1.0)
        run(state, t_end=0.03, fixed_dt=0.01, on_step=lambda s: seen.append(s.step_index))
        self.assertEqual(seen, [0, 1, 2, 3])

    def test_coclosedness_is_preserved(self):
        @dataclass
        class TestCase:
            description: str
            route: str
            integrator: str

        for test_case in [
            TestCase(description="direct rate with rk4", route="direct", integrator="rk4"),
            TestCase(description="velocity rate with rk4", route="velocity", integrator="rk4"),
            TestCase(description="direct rate with euler", route="direct", integrator="euler"),
        ]:
            with self.subTest(test_case.description):
                state = initial_state(perturbed_psi(16, 1e-3), 1.0, test_case.route)
                trajectory = run(state, t_end=0.1, integrator=test_case.integrator)
                self.assertTrue(trajectory.completed)
                self.assertLessEqual(coclosed_residual(trajectory.final.psi), 1e-8)

    def test_oversized_steps_abort(self):
        state = initial_state(perturbed_psi(16, 1e-2), 1.0)
        with self.assertRaises(StabilityViolation) as raised:
            run(state, t_end=20.0, c_cfl=10.0)
        self.assertGreaterEqual(raised.exception.step_index, 1)
        self.assertIsNotNone(raised.exception.trajectory)
        self.assertFalse(raised.exception.trajectory.completed)
        self.assertEqual(raised.exception.trajectory.states[0].step_index, 0)

    def test_invalid_arguments(self):
        grid = line_grid(8)
        with self.assertRaises(InvalidArgument) as raised:
            initial_state(flat_psi(grid), 0.0)
        self.assertIn("'A' must be positive", str(raised.exception))
        state = initial_state(flat_psi(grid), 1.0)
        self.assertRaises(InvalidArgument, lambda: initial_state(flat_psi(grid), 1.0, "sideways"))
        self.assertRaises(InvalidArgument, lambda: step(state, 0.0))
        self.assertRaises(InvalidArgument, lambda: run(state, t_end=1.0, integrator="rk2"))
        self.assertRaises(InvalidArgument, lambda: run(state, t_end=-1.0))


class TestRefreshGeometry(unittest.TestCase):
    def test_cache_is_consistent_with_psi(self):
        psi = perturbed_psi(16, 1e-3)
        cache = refresh_geometry(psi)
        self.assertLessEqual((hodge_star_field(cache.phi, cache.metric) - psi).max_abs(), 1e-9)
        self.assertGreater(cache.phi_evaluations, 1)
        self.assertGreater(cache.torsion.T.max_abs(), 1e-5)

    def test_warm_start_costs_one_evaluation(self):
        psi = perturbed_psi(16, 1e-3)
        cold = refresh_geometry(psi)
        warm = refresh_geometry(psi, cold.phi)
        self.assertEqual(warm.phi_evaluations, 1)
        np.testing.assert_array_equal(warm.phi.components, cold.phi.components)

    def test_unknown_scheme(self):
        self.assertRaises(InvalidArgument, lambda: refresh_geometry(perturbed_psi(16, 1e-3), scheme="fd2"))
