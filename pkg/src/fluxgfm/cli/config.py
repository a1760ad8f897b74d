"""
JSON configuration for the fluxgfm CLI.

Every section is a dataclass with ``to_dict`` / ``from_dict``; unknown keys
are rejected with a suggestion for the closest valid key. Poles and
``omega_s`` are given in units of the nominal frequency.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from ..errors import ConfigError, ErrorCode, find_similar
from ..formatting import FLOAT_FORMATS
from ..plant import PlantParams
from ..scenarios import MODES
from ..tuning import TuningSpec

logger = logging.getLogger(__name__)


def _check_keys(section: str, data: dict, cls: type) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be an object", code=ErrorCode.E0602)
    valid = [f.name for f in fields(cls)]
    for key in data:
        if key not in valid:
            similar = find_similar(key, valid)
            notes = [f"did you mean '{similar[0]}'?"] if similar else [f"valid keys: {', '.join(valid)}"]
            raise ConfigError(
                f"unknown key '{key}' in section '{section}'", code=ErrorCode.E0601, notes=notes
            )


def _number(section: str, key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{section}.{key} must be finite")
    return float(value)


def _positive(section: str, key: str, value: Any) -> float:
    number = _number(section, key, value)
    if number <= 0:
        raise ConfigError(f"{section}.{key} must be positive, got {number}")
    return number


def _pole(section: str, key: str, value: Any) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(f"{section}.{key}: a complex pole is [re, im]")
        return complex(_number(section, key, value[0]), _number(section, key, value[1]))
    return complex(_number(section, key, value), 0.0)


def _poles(section: str, key: str, value: Any) -> tuple[complex, complex]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{section}.{key} must list two poles")
    return (_pole(section, key, value[0]), _pole(section, key, value[1]))


def _pole_to_json(p: complex) -> float | list[float]:
    return p.real if p.imag == 0 else [p.real, p.imag]


# =============================================================================
# Sections
# =============================================================================

@dataclass
class PlantConfig:
    S_base_va: float = 20_000.0
    U_line_v: float = 380.0
    I_rated_a: float = 30.0
    L_base_h: float = 0.023
    f_base_hz: float = 50.0
    L_filter_pu: float = 0.1
    L_pu: float = 0.5
    U_g_pu: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> PlantConfig:
        _check_keys("plant", data, cls)
        return cls(**{k: _positive("plant", k, v) for k, v in data.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def omega_base(self) -> float:
        return 2.0 * math.pi * self.f_base_hz

    def to_plant(self, L_pu: float | None = None) -> PlantParams:
        plant = PlantParams.from_ratings(
            L_pu=self.L_pu if L_pu is None else L_pu,
            U_line_v=self.U_line_v,
            I_rated_a=self.I_rated_a,
            f_base_hz=self.f_base_hz,
            U_g=self.U_g_pu,
            L_filter_pu=self.L_filter_pu,
        )
        for label, configured, derived, unit in self.base_checks(plant):
            if abs(derived - configured) > 0.05 * configured:
                logger.warning(
                    "configured %s %.4g %s differs from %.4g %s implied by the ratings",
                    label, configured, unit, derived, unit,
                )
        return plant

    def base_checks(self, plant: PlantParams) -> list[tuple[str, float, float, str]]:
        """``(label, configured, derived, unit)`` for every base that is also derived from the ratings."""
        return [
            ("base power", self.S_base_va, plant.S_base, "VA"),
            ("base inductance", self.L_base_h, plant.L_base, "H"),
        ]


@dataclass
class DesignConfig:
    p_star_pu: float = 1.0
    V_star_pu: float = 1.0
    L0_pu: float = 0.5
    sigma_o: tuple[complex, complex] = (-2.5 + 0j, -2.5 + 0j)
    sigma_v: tuple[complex, complex] = (-1.0 + 0j, -1.0 + 0j)
    zeta: float = 0.9
    omega_s: float = 1.5
    shape_load_angle: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> DesignConfig:
        _check_keys("design", data, cls)
        values: dict[str, Any] = {}
        for key, value in data.items():
            if key in ("sigma_o", "sigma_v"):
                values[key] = _poles("design", key, value)
            elif key == "shape_load_angle":
                if not isinstance(value, bool):
                    raise ConfigError(f"design.{key} must be true or false, got {value!r}")
                values[key] = value
            elif key == "p_star_pu":
                values[key] = _number("design", key, value)
            else:
                values[key] = _positive("design", key, value)
        return cls(**values)

    def to_dict(self) -> dict:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["sigma_o"] = [_pole_to_json(p) for p in self.sigma_o]
        data["sigma_v"] = [_pole_to_json(p) for p in self.sigma_v]
        return data

    def to_spec(self, omega0: float, U_g: float = 1.0) -> TuningSpec:
        return TuningSpec(
            sigma_o=(self.sigma_o[0] * omega0, self.sigma_o[1] * omega0),
            sigma_v=(self.sigma_v[0] * omega0, self.sigma_v[1] * omega0),
            zeta=self.zeta,
            omega_s=self.omega_s * omega0,
            L0_pu=self.L0_pu,
            p_star=self.p_star_pu,
            V_star=self.V_star_pu,
            U_g=U_g,
            omega0=omega0,
            shape_load_angle=self.shape_load_angle,
        )


@dataclass
class SimulationConfig:
    scenario: str = "step_L050"
    mode: str = "continuous"
    sample_rate_hz: float = 10_000.0
    step_s: float = 1e-5
    output_rate_hz: float = 25_000.0
    float_format: str = "repr"

    @classmethod
    def from_dict(cls, data: dict) -> SimulationConfig:
        _check_keys("simulation", data, cls)
        values: dict[str, Any] = {}
        for key, value in data.items():
            if key in ("scenario", "mode", "float_format"):
                if not isinstance(value, str):
                    raise ConfigError(f"simulation.{key} must be a string")
                values[key] = value
            else:
                values[key] = _positive("simulation", key, value)
        config = cls(**values)
        config.validate()
        return config

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"simulation.mode must be one of {MODES}, got '{self.mode}'")
        if self.float_format not in FLOAT_FORMATS:
            raise ConfigError(
                f"simulation.float_format must be one of {FLOAT_FORMATS}, got '{self.float_format}'"
            )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SweepConfig:
    L_min_pu: float = 0.1
    L_max_pu: float = 1.0
    n_points: int = 19

    @classmethod
    def from_dict(cls, data: dict) -> SweepConfig:
        _check_keys("sweep", data, cls)
        values: dict[str, Any] = {}
        for key, value in data.items():
            if key == "n_points":
                if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                    raise ConfigError("sweep.n_points must be a positive integer")
                values[key] = value
            else:
                values[key] = _positive("sweep", key, value)
        config = cls(**values)
        config.validate()
        return config

    def validate(self) -> None:
        if not 0 < self.L_min_pu <= self.L_max_pu:
            raise ConfigError("sweep requires 0 < L_min_pu <= L_max_pu")
        if self.n_points > 1 and self.L_min_pu == self.L_max_pu:
            raise ConfigError("sweep with several points needs L_min_pu < L_max_pu")

    def L_values(self) -> list[float]:
        if self.n_points == 1:
            return [self.L_min_pu]
        step = (self.L_max_pu - self.L_min_pu) / (self.n_points - 1)
        return [self.L_min_pu + k * step for k in range(self.n_points)]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# =============================================================================
# Top level
# =============================================================================

_SECTIONS = {
    "plant": PlantConfig,
    "design": DesignConfig,
    "simulation": SimulationConfig,
    "sweep": SweepConfig,
}


@dataclass
class Config:
    plant: PlantConfig = field(default_factory=PlantConfig)
    design: DesignConfig = field(default_factory=DesignConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @classmethod
    def from_dict(cls, data: dict) -> Config:
        _check_keys("<root>", data, cls)
        return cls(**{key: _SECTIONS[key].from_dict(value) for key, value in data.items()})  # type: ignore[attr-defined]

    def to_dict(self) -> dict:
        return {
            "plant": self.plant.to_dict(),
            "design": self.design.to_dict(),
            "simulation": self.simulation.to_dict(),
            "sweep": self.sweep.to_dict(),
        }

    @classmethod
    def load(cls, path: str | Path) -> Config:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"configuration file not found: {path}", code=ErrorCode.E0603)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)

    def dump(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    # Derived objects

    @property
    def omega0(self) -> float:
        return self.plant.omega_base

    def plant_params(self, L_pu: float | None = None) -> PlantParams:
        return self.plant.to_plant(L_pu)

    def tuning_spec(self) -> TuningSpec:
        return self.design.to_spec(self.omega0, self.plant.U_g_pu)
