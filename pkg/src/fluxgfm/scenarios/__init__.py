"""
Scenario simulation

Timed power steps and frequency ramps, the nonlinear simulator, metric
extraction, and the CSV / JSON / gnuplot artifacts.
"""

from .definitions import (
    MODES,
    Event,
    FreqRamp,
    PowerStep,
    Scenario,
    load_scenario_file,
    scenario_from_dict,
    standard_scenarios,
)
from .metrics import ScenarioMetrics, StepMetrics, extract_metrics
from .output import (
    read_timeseries_csv,
    scenario_plot_script,
    sweep_plot_script,
    write_metrics_json,
    write_timeseries_csv,
)
from .simulation import CHANNELS, TimeSeries, simulate

__all__ = [
    "MODES",
    "CHANNELS",
    "Event",
    "FreqRamp",
    "PowerStep",
    "Scenario",
    "ScenarioMetrics",
    "StepMetrics",
    "TimeSeries",
    "extract_metrics",
    "load_scenario_file",
    "read_timeseries_csv",
    "scenario_from_dict",
    "scenario_plot_script",
    "simulate",
    "standard_scenarios",
    "sweep_plot_script",
    "write_metrics_json",
    "write_timeseries_csv",
]
