"""
fluxgfm - Virtual-Flux Grid-Forming Control

A Python library for designing, linearizing and simulating a grid-forming
converter controller built on a virtual flux observer and a PI frequency
estimator.
"""

# Errors (shared across modules)
from .errors import (
    FluxGFMError, ErrorCode,
    ZeroDirection, NonConjugatePair, NoConvergence, NonFiniteState,
    ZeroFrequency, InfeasibleSetpoint, SingularFlux, InvalidSpec,
    NoEquilibrium, UnstableSweep, SimulationDiverged, NoSteadyState,
    InvalidScenario, ConfigError,
    find_similar,
)

# Numerics kernel
from .numerics import J, rot, wrap_angle, place_rank_one, eig_small, rk4_step, Spectrum

# Plant
from .plant import (
    PlantParams, GridState, PlantState,
    plant_derivative, plant_derivative_dq,
    to_controller_frame, from_controller_frame,
    active_power, pcc_voltage_mag, virtual_flux, grid_voltage,
)

# Control law
from .controller import (
    ControllerGains, Setpoints, ControllerState, ControllerOutput, Controller,
    observer_error, estimate_frequency, observer_derivative, voltage_command,
    controller_step,
)

# Small-signal analysis
from .smallsignal import (
    SyncCoeffs, sync_tf_coeffs, sync_transfer_matrix, static_gain,
    approximate_voltage_linearization,
    Equilibrium, find_equilibrium,
    ClosedLoopModel, closed_loop_matrix, closed_loop_field, numeric_jacobian,
    error_coordinates, linear_response, dominant_pole, is_stable,
    PoleSweepResult, SweepSample, pole_sweep,
)

# Gain design
from .tuning import (
    TuningSpec, Design,
    load_angle_setpoint, load_angle_linear, steady_state_targets, setpoints_for,
    design_K_o, design_k_p, design_k_i, design_k_v, full_design,
    identity_residuals,
)

# Scenarios
from .scenarios import (
    Scenario, PowerStep, FreqRamp, TimeSeries,
    ScenarioMetrics, StepMetrics,
    simulate, extract_metrics, standard_scenarios,
)

__version__ = "0.1.0"

__all__ = [
    # Errors
    "FluxGFMError", "ErrorCode",
    "ZeroDirection", "NonConjugatePair", "NoConvergence", "NonFiniteState",
    "ZeroFrequency", "InfeasibleSetpoint", "SingularFlux", "InvalidSpec",
    "NoEquilibrium", "UnstableSweep", "SimulationDiverged", "NoSteadyState",
    "InvalidScenario", "ConfigError", "find_similar",
    # Numerics
    "J", "rot", "wrap_angle", "place_rank_one", "eig_small", "rk4_step", "Spectrum",
    # Plant
    "PlantParams", "GridState", "PlantState",
    "plant_derivative", "plant_derivative_dq",
    "to_controller_frame", "from_controller_frame",
    "active_power", "pcc_voltage_mag", "virtual_flux", "grid_voltage",
    # Controller
    "ControllerGains", "Setpoints", "ControllerState", "ControllerOutput", "Controller",
    "observer_error", "estimate_frequency", "observer_derivative", "voltage_command",
    "controller_step",
    # Small-signal
    "SyncCoeffs", "sync_tf_coeffs", "sync_transfer_matrix", "static_gain",
    "approximate_voltage_linearization",
    "Equilibrium", "find_equilibrium",
    "ClosedLoopModel", "closed_loop_matrix", "closed_loop_field", "numeric_jacobian",
    "error_coordinates", "linear_response", "dominant_pole", "is_stable",
    "PoleSweepResult", "SweepSample", "pole_sweep",
    # Tuning
    "TuningSpec", "Design",
    "load_angle_setpoint", "load_angle_linear", "steady_state_targets", "setpoints_for",
    "design_K_o", "design_k_p", "design_k_i", "design_k_v", "full_design",
    "identity_residuals",
    # Scenarios
    "Scenario", "PowerStep", "FreqRamp", "TimeSeries",
    "ScenarioMetrics", "StepMetrics",
    "simulate", "extract_metrics", "standard_scenarios",
]
