"""Ground states of 2D Ising spin glasses with hBOA, and run-time statistics."""

__version__ = "0.1.0"

from .evd import EvdFit, EvdParams, fit_mle, fit_power_law, moment_defined
from .harness import BatchSpec, InstanceRecord, bisect_population, measure_instance, run_batch
from .hboa import Caps, RunMetrics, build_model, hboa_run, sample_model
from .lattice import (
    CouplingDistribution,
    SpinGlassInstance,
    delta_energy,
    energy,
    generate_instance,
    parse_instance,
    write_instance,
)
from .local_search import ClimbResult, hill_climb
from .oracle import GroundTruth, brute_force_ground, exact_ground, transfer_matrix_ground

__all__ = [
    "BatchSpec",
    "Caps",
    "ClimbResult",
    "CouplingDistribution",
    "EvdFit",
    "EvdParams",
    "GroundTruth",
    "InstanceRecord",
    "RunMetrics",
    "SpinGlassInstance",
    "bisect_population",
    "brute_force_ground",
    "build_model",
    "delta_energy",
    "energy",
    "exact_ground",
    "fit_mle",
    "fit_power_law",
    "generate_instance",
    "hboa_run",
    "hill_climb",
    "measure_instance",
    "moment_defined",
    "parse_instance",
    "run_batch",
    "sample_model",
    "transfer_matrix_ground",
    "write_instance",
]
