import unittest
from dataclasses import dataclass
from typing import List

import numpy as np
from g2_coflow.coflow import initial_state
from g2_coflow.errors import InvalidArgument
from g2_coflow.errors import NotPositive
from g2_coflow.initial_data import exact_perturbation
from g2_coflow.initial_data import flat_psi
from g2_coflow.initial_data import is_recoverable
from g2_coflow.initial_data import perturbation_psi
from g2_coflow.initial_data import reparametrized_flat_psi
from g2_coflow.torsion import coclosed_residual
from tests import line_grid


class TestPerturbation(unittest.TestCase):
    def test_seeded_perturbations_are_reproducible(self):
        grid = line_grid(16)
        first = perturbation_psi(grid, 1e-3, [1, 2], 5, [0])
        second = perturbation_psi(grid, 1e-3, [1, 2], 5, [0])
        other = perturbation_psi(grid, 1e-3, [1, 2], 6, [0])
        np.testing.assert_array_equal(first.components, second.components)
        self.assertGreater((first - other).max_abs(), 1e-5)

    def test_perturbation_is_closed_with_the_requested_size(self):
        grid = line_grid(16)
        for amplitude in (0.0, 1e-3, 5e-2):
            with self.subTest(f"amplitude {amplitude}"):
                psi = perturbation_psi(grid, amplitude, [1, 2], 3, [0])
                self.assertLessEqual(coclosed_residual(psi), 1e-12)
                self.assertAlmostEqual((psi - flat_psi(grid)).max_abs(), amplitude, delta=1e-15)

    def test_direction_is_normalised(self):
        grid = line_grid(16)
        self.assertAlmostEqual(exact_perturbation(grid, [2], 9, [0]).max_abs(), 1.0, delta=1e-15)

    def test_amplitude_outside_the_positive_cone(self):
        grid = line_grid(16)
        with self.assertRaises(NotPositive) as raised:
            perturbation_psi(grid, 10.0, [1, 2], 3, [0])
        safe = raised.exception.safe_amplitude
        self.assertIsNotNone(safe)
        self.assertGreater(safe, 0.0)
        self.assertLess(safe, 10.0)
        self.assertTrue(is_recoverable(perturbation_psi(grid, 0.5 * safe, [1, 2], 3, [0])))

    def test_invalid_perturbations(self):
        @dataclass
        class TestCase:
            description: str
            modes: List[int]
            seed: int
            axes: List[int]

        grid = line_grid(16)
        for test_case in [
            TestCase(description="inactive axis", modes=[1], seed=0, axes=[3]),
            TestCase(description="mode at Nyquist", modes=[8], seed=0, axes=[0]),
            TestCase(description="zero mode", modes=[0], seed=0, axes=[0]),
            TestCase(description="negative seed", modes=[1], seed=-1, axes=[0]),
        ]:
            with self.subTest(test_case.description):
                self.assertRaises(
                    InvalidArgument, lambda: perturbation_psi(grid, 1e-3, test_case.modes, test_case.seed, test_case.axes)
                )


class TestReparametrizedFlat(unittest.TestCase):
    def test_reparametrized_structure_is_closed_and_torsion_free(self):
        psi = reparametrized_flat_psi(line_grid(32), 0.2, mode=2)
        self.assertTrue(is_recoverable(psi))
        self.assertLessEqual(coclosed_residual(psi), 1e-12)
        self.assertGreater((psi - flat_psi(psi.grid)).max_abs(), 0.19)
        state = initial_state(psi, 1.0)
        self.assertLessEqual(state.cache.torsion.T.max_abs(), 1e-10)
        self.assertLessEqual(state.cache.curvature.riemann.max_abs(), 1e-10)
