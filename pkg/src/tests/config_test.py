import math
import unittest
from dataclasses import dataclass
from typing import Optional

import numpy as np
from g2_coflow.config import KEY_TABLE
from g2_coflow.config import InitialConfig
from g2_coflow.config import build_initial
from g2_coflow.config import key_table_markdown
from g2_coflow.config import parse_config
from g2_coflow.errors import NotPositive
from g2_coflow.errors import ParseError
from g2_coflow.errors import ValidationError
from g2_coflow.initial_data import flat_psi
from g2_coflow.torsion import coclosed_residual
from tests import line_grid

MINIMAL = """
[grid]
dims = [16, 1, 1, 1, 1, 1, 1]

[flow]
t_end = 0.5
"""


class TestParseConfig(unittest.TestCase):
    def test_defaults(self):
        config = parse_config(MINIMAL)
        self.assertEqual(config.grid.dims, (16, 1, 1, 1, 1, 1, 1))
        self.assertEqual(config.grid.lengths, (2.0 * math.pi,) * 7)
        self.assertEqual(config.flow.t_end, 0.5)
        self.assertEqual(config.flow.A, 1.0)
        self.assertEqual(config.flow.scheme, "spectral")
        self.assertEqual(config.flow.route, "direct")
        self.assertEqual(config.flow.integrator, "rk4")
        self.assertEqual(config.flow.c_cfl, 0.1)
        self.assertIsNone(config.flow.dt)
        self.assertEqual(config.initial.kind, "flat")
        self.assertEqual(config.monitors.names, ("shi", "fit"))
        self.assertEqual(config.monitors.kmax, 2)
        self.assertEqual(config.output.timeseries, "timeseries.csv")
        self.assertEqual(config.output.checkpoint_every, 0)
        self.assertEqual(config.runtime.workers, 1)
        self.assertEqual(config.runtime.max_tensor_elements, 60_000_000)
        self.assertEqual(config.as_dict()["flow"]["A"], 1.0)
        self.assertEqual(config.grid.build().dims, config.grid.dims)

    def test_full_configuration(self):
        config = parse_config(
            MINIMAL
            + """A = 2.5
route = "both"
integrator = "euler"
dt = 0.001

[initial]
kind = "perturbation"
amplitude = 0.001
modes = [1, 2]
seed = 42
axes = [1]

[monitors]
names = ["shi", "fit", "evolution", "commutator"]
kmax = 3
every = 5

[runtime]
workers = 4
"""
        )
        self.assertEqual(config.flow.A, 2.5)
        self.assertEqual(config.flow.route, "both")
        self.assertEqual(config.flow.dt, 0.001)
        self.assertEqual(config.initial.modes, (1, 2))
        self.assertEqual(config.initial.seed, 42)
        self.assertEqual(config.monitors.every, 5)
        self.assertEqual(config.runtime.workers, 4)

    def test_validation_errors(self):
        @dataclass
        class TestCase:
            description: str
            text: str
            error_message: str
            violations: int = 1

        for test_case in [
            TestCase(description="A must be positive", text=MINIMAL + "A = 0.0\n", error_message="'flow.A' must be positive"),
            TestCase(
                description="odd active axis",
                text=MINIMAL.replace("[16,", "[15,"),
                error_message="'grid.dims' axes [1] must be inactive (1) or even and at least 8 for spectral differentiation",
            ),
            TestCase(
                description="scheme named in the message",
                text=MINIMAL.replace("[16,", "[6,") + 'scheme = "fd4"\n',
                error_message="for fd4 differentiation",
            ),
            TestCase(description="missing final time", text=MINIMAL.replace("t_end = 0.5", ""), error_message="must have 'flow.t_end'"),
            TestCase(
                description="two violations",
                text=MINIMAL + 'A = -1.0\nintegrator = "leapfrog"\n',
                error_message="'flow.A' must be positive, 'flow.integrator' must be one of 'euler', 'rk4'",
                violations=2,
            ),
            TestCase(
                description="perturbation without seed",
                text=MINIMAL + '[initial]\nkind = "perturbation"\namplitude = 0.001\n',
                error_message="'initial.seed' is required for perturbation data",
            ),
            TestCase(
                description="perturbation along an inactive axis",
                text=MINIMAL + '[initial]\nkind = "perturbation"\nseed = 1\naxes = [3]\n',
                error_message="'initial.axes' names inactive axis 3",
            ),
            TestCase(description="kmax over the cap", text=MINIMAL + "[monitors]\nkmax = 5\n", error_message="'monitors.kmax' must lie in [0, 4]"),
            TestCase(description="too many workers", text=MINIMAL + "[runtime]\nworkers = 65\n", error_message="'runtime.workers'"),
        ]:
            with self.subTest(test_case.description):
                with self.assertRaises(ValidationError) as raised:
                    parse_config(test_case.text)
                self.assertIn(test_case.error_message, str(raised.exception))
                self.assertEqual(len(raised.exception.violations), test_case.violations)

    def test_parse_errors(self):
        @dataclass
        class TestCase:
            description: str
            text: str
            line: Optional[int]
            key: Optional[str] = None

        for test_case in [
            TestCase(description="unknown key", text=MINIMAL + "speed = 2.0\n", line=7, key="flow.speed"),
            TestCase(description="unknown section", text=MINIMAL + "\n[extras]\nx = 1\n", line=8, key="extras"),
            TestCase(description="malformed value", text=MINIMAL + "A = = 1\n", line=7),
        ]:
            with self.subTest(test_case.description):
                with self.assertRaises(ParseError) as raised:
                    parse_config(test_case.text)
                self.assertEqual(raised.exception.line, test_case.line)
                self.assertEqual(raised.exception.key, test_case.key)

    def test_key_table_is_documented(self):
        table = key_table_markdown()
        for spec in KEY_TABLE:
            with self.subTest(f"{spec.section}.{spec.key}"):
                self.assertIn(f"`{spec.section}.{spec.key}`", table)


class TestBuildInitial(unittest.TestCase):
    def test_flat(self):
        grid = line_grid(16)
        psi = build_initial(InitialConfig("flat", 0.0, (1,), None, (1,)), grid)
        np.testing.assert_array_equal(psi.components, flat_psi(grid).components)

    def test_perturbation_uses_one_based_axes(self):
        grid = line_grid(16)
        psi = build_initial(InitialConfig("perturbation", 1e-3, (1, 2), 4, (1,)), grid)
        self.assertAlmostEqual((psi - flat_psi(grid)).max_abs(), 1e-3, delta=1e-15)
        self.assertLessEqual(coclosed_residual(psi), 1e-12)

    def test_reparametrized(self):
        grid = line_grid(16)
        psi = build_initial(InitialConfig("reparametrized", 0.2, (1,), None, (1,)), grid)
        self.assertGreater((psi - flat_psi(grid)).max_abs(), 0.19)
        self.assertRaises(
            ValidationError,
            lambda: build_initial(InitialConfig("reparametrized", 0.2, (1,), None, (1,)), line_grid(16).with_dims((1, 16, 1, 1, 1, 1, 1))),
        )

    def test_perturbation_outside_the_cone(self):
        with self.assertRaises(NotPositive) as raised:
            build_initial(InitialConfig("perturbation", 10.0, (1, 2), 3, (1,)), line_grid(16))
        self.assertIn("largest safe amplitude", str(raised.exception))
