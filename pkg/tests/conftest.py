"""
Pytest configuration and shared fixtures for fluxgfm tests.
"""

import pytest

from fluxgfm import PlantParams, TuningSpec, full_design
from fluxgfm.scenarios import extract_metrics, simulate, standard_scenarios
from fluxgfm.tuning import NOMINAL_OMEGA


@pytest.fixture(scope="session")
def omega0() -> float:
    """Nominal angular frequency (50 Hz) in rad/s."""
    return NOMINAL_OMEGA


@pytest.fixture(scope="session")
def reference_spec() -> TuningSpec:
    """Reference design at p* = 1 pu, L0 = 0.5 pu, physical units."""
    return TuningSpec.reference()


@pytest.fixture(scope="session")
def reference_design(reference_spec):
    return full_design(reference_spec)


@pytest.fixture(scope="session")
def nominal_plant() -> PlantParams:
    return PlantParams(L_pu=0.5)


@pytest.fixture(scope="session")
def normalized_design():
    """Reference design with omega0 = 1 at zero load; gains are easy to check by hand."""
    return full_design(TuningSpec.reference(omega0=1.0, p_star=0.0))


@pytest.fixture(scope="session")
def scenario_runs():
    """
    Run standard scenarios on demand and cache the results.

    Returns a callable ``run(name, mode="continuous") -> (scenario, series, metrics)``.
    """
    scenarios = standard_scenarios()
    cache = {}

    def run(name: str, mode: str = "continuous"):
        key = (name, mode)
        if key not in cache:
            sc = scenarios[name].with_mode(mode)
            ts = simulate(sc)
            cache[key] = (sc, ts, extract_metrics(ts, sc))
        return cache[key]

    return run
