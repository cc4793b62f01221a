"""Weighted wave-function Monte Carlo for continuously measured open systems.

The simulator evolves an ensemble of pure states with probability weights.
Decoherence channels drive each member with its own Wiener noise, continuous
measurements drive all members with a shared noise and update the weights,
and a periodic regeneration step replaces negligible-weight members by
splitting the heaviest ones.  A direct density-matrix integrator of the same
conditional master equation serves as the reference for validation.
"""

from wavemc.ensemble import (
    WeightedEnsemble,
    assemble_density,
    effective_size,
    init_uniform,
    regenerate,
)
from wavemc.engine import SimulationConfig, TrajectoryRecord, compare_shared_noise, estimate_error, run
from wavemc.model import ModelSpec
from wavemc.noise import NoiseStreams, coarse_from_fine
from wavemc.steppers import (
    DecoherenceChannel,
    HamiltonianNoiseChannel,
    MeasurementChannel,
)

__version__ = "0.1.0"

__all__ = [
    "DecoherenceChannel",
    "HamiltonianNoiseChannel",
    "MeasurementChannel",
    "ModelSpec",
    "NoiseStreams",
    "SimulationConfig",
    "TrajectoryRecord",
    "WeightedEnsemble",
    "assemble_density",
    "coarse_from_fine",
    "compare_shared_noise",
    "effective_size",
    "estimate_error",
    "init_uniform",
    "regenerate",
    "run",
]
