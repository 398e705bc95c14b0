"""
.. include:: ../../README.md
"""
from .analysis import aggregates
from .analysis import commutator_monitor
from .analysis import evolution_monitors
from .analysis import fit_analyticity
from .analysis import lambda_field
from .analysis import p_function
from .analysis import shi_sequences
from .argument_validators import AbstractArgumentValidator
from .checkpoint import Checkpoint
from .coflow import FlowState
from .coflow import initial_state
from .coflow import run
from .coflow import step
from .coflow import velocity
from .config import RunConfig
from .config import build_initial
from .config import parse_config
from .fields import FormField
from .fields import Grid
from .g2_algebra import PointForm
from .g2_algebra import standard_structure
from .lab_config import LabConfig
from .validate_args_decorator import validate_args
from .validation_context import ValidationContext
from .validation_result import ValidationResult
