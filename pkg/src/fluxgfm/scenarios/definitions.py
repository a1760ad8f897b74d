"""
Scenario definitions: timed power steps and grid frequency ramps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

from ..errors import InvalidScenario, find_similar
from ..plant import PlantParams
from ..tuning import TuningSpec

MODES = ("continuous", "sampled")


@dataclass(frozen=True)
class PowerStep:
    """Change of the active power setpoint at ``t``."""
    t: float
    p_star: float

    def to_dict(self) -> dict:
        return {"type": "power_step", "t": self.t, "p_star": self.p_star}


@dataclass(frozen=True)
class FreqRamp:
    """Linear grid frequency ramp between ``t_start`` and ``t_end``."""
    t_start: float
    t_end: float
    f_start_hz: float
    f_end_hz: float

    @property
    def t(self) -> float:
        return self.t_start

    def to_dict(self) -> dict:
        return {
            "type": "freq_ramp",
            "t_start": self.t_start,
            "t_end": self.t_end,
            "f_start_hz": self.f_start_hz,
            "f_end_hz": self.f_end_hz,
        }


Event = Union[PowerStep, FreqRamp]


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    plant: PlantParams
    design: TuningSpec
    p_star_initial: float = 0.0
    events: tuple[Event, ...] = field(default_factory=tuple)
    mode: str = "continuous"
    sample_rate_hz: float = 10_000.0
    step_s: float = 1e-5
    output_rate_hz: float = 25_000.0
    zoh_compensation: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        if not self.duration > 0:
            raise InvalidScenario(f"scenario '{self.name}': duration must be positive")
        if self.mode not in MODES:
            raise InvalidScenario(f"scenario '{self.name}': unknown mode '{self.mode}'")
        if not self.step_s > 0:
            raise InvalidScenario(f"scenario '{self.name}': step must be positive")
        times = [ev.t for ev in self.events]
        if any(t < 0 or t > self.duration for t in times):
            raise InvalidScenario(f"scenario '{self.name}': event outside [0, {self.duration}] s")
        if any(b < a for a, b in zip(times, times[1:])):
            raise InvalidScenario(f"scenario '{self.name}': event times must be non-decreasing")
        for ev in self.events:
            if isinstance(ev, FreqRamp) and not ev.t_start <= ev.t_end <= self.duration:
                raise InvalidScenario(f"scenario '{self.name}': ramp must end after it starts")
        _integer_ratio(self, 1.0 / self.step_s, self.output_rate_hz, "output rate")
        if self.mode == "sampled":
            _integer_ratio(self, 1.0 / self.step_s, self.sample_rate_hz, "sampling rate")

    @property
    def power_steps(self) -> list[PowerStep]:
        return [ev for ev in self.events if isinstance(ev, PowerStep)]

    @property
    def ramps(self) -> list[FreqRamp]:
        return [ev for ev in self.events if isinstance(ev, FreqRamp)]

    def grid_omega(self, t: float) -> float:
        """Grid frequency in rad/s at time ``t``."""
        omega = self.plant.omega_base
        for ramp in self.ramps:
            if t < ramp.t_start:
                break
            w0 = 2.0 * math.pi * ramp.f_start_hz
            w1 = 2.0 * math.pi * ramp.f_end_hz
            if t >= ramp.t_end or ramp.t_end == ramp.t_start:
                omega = w1
            else:
                omega = w0 + (w1 - w0) * (t - ramp.t_start) / (ramp.t_end - ramp.t_start)
        return omega

    def p_star_at(self, t: float) -> float:
        """Active power setpoint in force at ``t`` (steps apply at their instant)."""
        p = self.p_star_initial
        for step in self.power_steps:
            if step.t <= t:
                p = step.p_star
        return p

    def with_mode(self, mode: str, **overrides) -> Scenario:
        return replace(self, mode=mode, **overrides)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "duration_s": self.duration,
            "L_pu": self.plant.L_pu,
            "p_star_initial": self.p_star_initial,
            "events": [ev.to_dict() for ev in self.events],
        }


def _integer_ratio(sc: Scenario, base_hz: float, rate_hz: float, what: str) -> None:
    ratio = base_hz / rate_hz if rate_hz > 0 else math.nan
    if not math.isfinite(ratio) or ratio < 1 or abs(ratio - round(ratio)) > 1e-9 * ratio:
        raise InvalidScenario(
            f"scenario '{sc.name}': {what} {rate_hz} Hz must divide the integration rate {base_hz:.6g} Hz"
        )


# =============================================================================
# Standard set
# =============================================================================

STEP_EVENTS = (PowerStep(0.1, 0.5), PowerStep(0.3, 1.0), PowerStep(0.5, 0.0))


def standard_scenarios(
    design: TuningSpec | None = None, plant: PlantParams | None = None
) -> dict[str, Scenario]:
    """Power steps at L = 0.5, 1.0 and 0.1 pu and the 50 -> 45 Hz ramp."""
    design = design or TuningSpec.reference()
    plant = plant or PlantParams(L_pu=0.5)

    def step(name: str, L: float) -> Scenario:
        return Scenario(
            name=name,
            duration=0.7,
            plant=replace(plant, L_pu=L),
            design=design,
            p_star_initial=0.0,
            events=STEP_EVENTS,
        )

    f_base = plant.omega_base / (2.0 * math.pi)
    return {
        "step_L050": step("step_L050", 0.5),
        "step_L100": step("step_L100", 1.0),
        "step_L010": step("step_L010", 0.1),
        "framp_L050": Scenario(
            name="framp_L050",
            duration=1.5,
            plant=replace(plant, L_pu=0.5),
            design=design,
            p_star_initial=0.5,
            events=(FreqRamp(0.2, 1.2, f_base, 0.9 * f_base),),
        ),
    }


# =============================================================================
# Scenario files
# =============================================================================

_FILE_KEYS = ["name", "duration_s", "L_pu", "p_star_initial", "events"]


def _event_from_dict(data: dict) -> Event:
    kind = data.get("type")
    try:
        if kind == "power_step":
            return PowerStep(t=float(data["t"]), p_star=float(data["p_star"]))
        if kind == "freq_ramp":
            return FreqRamp(
                t_start=float(data["t_start"]),
                t_end=float(data["t_end"]),
                f_start_hz=float(data["f_start_hz"]),
                f_end_hz=float(data["f_end_hz"]),
            )
    except KeyError as exc:
        raise InvalidScenario(f"event of type '{kind}' is missing field {exc}") from exc
    raise InvalidScenario(f"unknown event type '{kind}'", notes=["expected 'power_step' or 'freq_ramp'"])


def scenario_from_dict(data: dict, design: TuningSpec, plant: PlantParams, **options) -> Scenario:
    for key in data:
        if key not in _FILE_KEYS:
            similar = find_similar(key, _FILE_KEYS)
            notes = [f"did you mean '{similar[0]}'?"] if similar else []
            raise InvalidScenario(f"unknown scenario key '{key}'", notes=notes)
    try:
        return Scenario(
            name=str(data.get("name", "custom")),
            duration=float(data["duration_s"]),
            plant=replace(plant, L_pu=float(data.get("L_pu", plant.L_pu))),
            design=design,
            p_star_initial=float(data.get("p_star_initial", 0.0)),
            events=tuple(_event_from_dict(ev) for ev in data.get("events", [])),
            **options,
        )
    except KeyError as exc:
        raise InvalidScenario(f"scenario file is missing {exc}") from exc


def load_scenario_file(path: str | Path, design: TuningSpec, plant: PlantParams, **options) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidScenario(f"{path}: invalid JSON ({exc})") from exc
    return scenario_from_dict(data, design, plant, **options)
