"""High-harmonic generation in 1D model atoms seen through TDSE dipoles, Bohmian and classical trajectories."""

from .core import (SpatialGrid, TimeSeries, Trajectory, TrajectoryKind, Wavefunction, make_grid,
                   read_snapshot, set_threads, write_snapshot)
from .errors import (BohmianHHGError, ConfigurationError, ContractViolation, ConvergenceError,
                     DegenerateStateError, IntegrationDiverged, NumericalError, PropagationDiverged)
from .potentials import (PotentialSpec, PotentialVariant, PulseSpec, cutoff_harmonic, keldysh_gamma,
                         ponderomotive_energy)
from .tdse import PropagationSchedule, bound_spectrum, ground_state, propagate, split_step
from .bohmian import integrate_trajectories, quantum_potential, velocity_field
from .classical import ArchTable, arch_curves, potential_trajectory, return_events
from .spectral import cutoff_estimate, gabor_map, power_spectrum, ridge_compare
from .config import RunConfig, parse_config
from .pipelines import run_pipeline

__version__ = "0.1.0"
