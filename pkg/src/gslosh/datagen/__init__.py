"""Ground-truth generators, rheology, and the trajectory file format."""

from .datafile import (
    SURFACE_GROUP,
    DatasetError,
    SloshDataset,
    dataset_read,
    dataset_write,
)
from .oscillator import (
    OscillatorSystem,
    energy,
    entropy,
    oscillator_operators,
    oscillator_step_exact,
    oscillator_trajectories,
    without_dissipation,
)
from .rheology import (
    FLUIDS,
    FluidPreset,
    GLYCERINE_VISCOSITY,
    Rheology,
    effective_viscosity,
    fluid_preset,
    herschel_bulkley,
)
from .shallow import CflError, SloshConfig, concat_datasets, slosh_generate

__all__ = [
    "CflError",
    "DatasetError",
    "FLUIDS",
    "FluidPreset",
    "GLYCERINE_VISCOSITY",
    "OscillatorSystem",
    "Rheology",
    "SURFACE_GROUP",
    "SloshConfig",
    "SloshDataset",
    "concat_datasets",
    "dataset_read",
    "dataset_write",
    "effective_viscosity",
    "energy",
    "entropy",
    "fluid_preset",
    "herschel_bulkley",
    "oscillator_operators",
    "oscillator_step_exact",
    "oscillator_trajectories",
    "slosh_generate",
    "without_dissipation",
]
