"""Contraction certificates and simulation for quorum-sensing networks.

Submodules
----------
matmeasure   matrix measures, weighted and block-combined norms
dynsys       vector fields, Jacobians, periodic inputs, state boxes
network      quorum-sensing and directly coupled network assembly
certify      sampled contraction certificates and closed-form conditions
sim          RK4 / adaptive RK45 / Euler-Maruyama integration
diagnostics  sync errors, rates, periods, distortion, reports
models       catalog of worked systems
config, cli  experiment configs and the ``quorumsync`` command
"""

__version__ = "0.1.0"

from .errors import (AssemblyError, DivergenceError, DomainError, InputError, InvariantError,
                     QuorumSyncError, UnsupportedError)
from .matmeasure import MeasureKind, WeightSpec, BlockPartition, measure, measure_limit_oracle
from .dynsys import VectorField, PeriodicSignal, StateBox
from .network import QuorumNetwork, assemble_quorum, input_equivalence_check
from .sim import IntegratorConfig, SdeConfig, Trajectory, integrate, integrate_sde
from .certify import ContractionCertificate, ConditionReport, verify_contraction, certify_model
from .diagnostics import pairwise_sync_error, sync_report
from .models import build_model

__all__ = [
    "__version__",
    "QuorumSyncError", "InputError", "UnsupportedError", "DomainError", "AssemblyError",
    "InvariantError", "DivergenceError",
    "MeasureKind", "WeightSpec", "BlockPartition", "measure", "measure_limit_oracle",
    "VectorField", "PeriodicSignal", "StateBox",
    "QuorumNetwork", "assemble_quorum", "input_equivalence_check",
    "IntegratorConfig", "SdeConfig", "Trajectory", "integrate", "integrate_sde",
    "ContractionCertificate", "ConditionReport", "verify_contraction", "certify_model",
    "pairwise_sync_error", "sync_report",
    "build_model",
]
