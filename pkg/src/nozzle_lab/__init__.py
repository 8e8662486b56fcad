"""Numerical laboratory for thin-channel compressible flow limits.

The package bundles a quasi-1D nozzle solver and an axisymmetric
Navier-Stokes solver with the relative-energy machinery that compares
them, plus eigensolver experiments for the thin-domain Korn and Poincare
inequality constants.
"""

__version__ = "0.1.0"

from .geometry import (
    ChannelGeometry,
    TiltField,
    area,
    area_derivative,
    channel_volume,
    check_divergence_identity,
    scale_to_epsilon,
    tilt_field_circular,
    tilt_field_neumann,
)
from .thermo import (
    PressureLaw,
    pressure_eval,
    pressure_potential,
    relative_energy_density,
)
from .solver1d import Grid1D, State1D, Trajectory1D, Visc1DParams, run_1d
from .solver_axi import (
    AxiGrid,
    AxiState,
    AxiTrajectory,
    ViscParams3D,
    energy_monitor,
    initial_axi_state,
    run_axi,
)
from .relent import (
    ExtendedReference,
    ReferencePair,
    RelativeEnergyReport,
    StudyConfig,
    continuity_residual,
    convergence_study,
    extend_reference,
    relative_energy,
    rei_residual,
)
from .korn import (
    KernelElement,
    KornEstimate,
    classical_korn_constant,
    example_blowup_field,
    normal_trace_bound,
    optimal_korn_experiment,
    sweep_report,
    tangent_poincare_constant,
    thin_korn_constants,
)
from .config import ConfigError, ExperimentConfig, load_config

__all__ = [
    "__version__",
    "ChannelGeometry", "TiltField", "area", "area_derivative",
    "channel_volume", "check_divergence_identity", "scale_to_epsilon",
    "tilt_field_circular", "tilt_field_neumann",
    "PressureLaw", "pressure_eval", "pressure_potential",
    "relative_energy_density",
    "Grid1D", "State1D", "Trajectory1D", "Visc1DParams", "run_1d",
    "AxiGrid", "AxiState", "AxiTrajectory", "ViscParams3D",
    "energy_monitor", "initial_axi_state", "run_axi",
    "ExtendedReference", "ReferencePair", "RelativeEnergyReport",
    "StudyConfig", "continuity_residual", "convergence_study",
    "extend_reference", "relative_energy", "rei_residual",
    "KernelElement", "KornEstimate", "classical_korn_constant",
    "example_blowup_field", "normal_trace_bound", "optimal_korn_experiment",
    "sweep_report", "tangent_poincare_constant", "thin_korn_constants",
    "ConfigError", "ExperimentConfig", "load_config",
]
