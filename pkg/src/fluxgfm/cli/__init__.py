"""
fluxgfm command-line interface

Subcommands ``gains``, ``eig-sweep``, ``simulate`` and ``linearize`` driven
by a JSON configuration.
"""

from .config import Config, DesignConfig, PlantConfig, SimulationConfig, SweepConfig
from .main import build_parser, main

__all__ = [
    "Config",
    "DesignConfig",
    "PlantConfig",
    "SimulationConfig",
    "SweepConfig",
    "build_parser",
    "main",
]
