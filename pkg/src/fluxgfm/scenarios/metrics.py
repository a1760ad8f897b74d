"""
Step-response and droop metrics extracted from simulated traces.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import NoSteadyState
from .definitions import Scenario
from .simulation import TimeSeries

STEADY_WINDOW_S = 0.02
SETTLING_BAND = 0.02
STEADY_SPREAD_PU = 0.01


@dataclass(frozen=True)
class StepMetrics:
    t_event: float
    p_star: float
    p_before: float
    p_after: float
    settling_time_2pct: float
    overshoot: float
    V_excursion: float


@dataclass(frozen=True)
class ScenarioMetrics:
    name: str
    steps: tuple[StepMetrics, ...]
    V_excursion_max: float
    steady_p_offset: float
    omega_tracking_max: float
    D_p: float | None = None
    plateaus: tuple[tuple[float, float, float], ...] = field(default_factory=tuple)

    @property
    def settling_time_2pct(self) -> float:
        """Worst settling time over all steps (0 without steps)."""
        return max((s.settling_time_2pct for s in self.steps), default=0.0)

    @property
    def overshoot(self) -> float:
        return max((s.overshoot for s in self.steps), default=0.0)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["settling_time_2pct"] = self.settling_time_2pct
        data["overshoot"] = self.overshoot
        data["steps"] = [asdict(s) for s in self.steps]
        data["plateaus"] = [
            {"t_end": t, "p_star": p_star, "p_ss": p_ss} for t, p_star, p_ss in self.plateaus
        ]
        return data


def _plateau(ts: TimeSeries, t_end: float) -> float:
    mask = ts.window(t_end - STEADY_WINDOW_S, t_end)
    if not mask.any():
        mask = ts.t <= t_end
    return float(np.mean(ts.p[mask]))


def _step_metrics(
    ts: TimeSeries, t_event: float, t_next: float, p_star: float, V_star: float
) -> StepMetrics:
    p_before = _plateau(ts, t_event)
    p_after = _plateau(ts, t_next)
    magnitude = abs(p_after - p_before)

    segment = ts.window(t_event, t_next)
    t_seg, p_seg = ts.t[segment], ts.p[segment]

    settling = 0.0
    overshoot = 0.0
    if magnitude > 1e-9 and len(t_seg):
        outside = np.flatnonzero(np.abs(p_seg - p_after) > SETTLING_BAND * magnitude)
        if len(outside):
            settling = float(t_seg[outside[-1]] - t_event)
        direction = np.sign(p_after - p_before)
        overshoot = max(0.0, float(np.max(direction * (p_seg - p_after))))
    V_exc = float(np.max(np.abs(ts.V[segment] - V_star))) if segment.any() else 0.0
    return StepMetrics(
        t_event=t_event,
        p_star=p_star,
        p_before=p_before,
        p_after=p_after,
        settling_time_2pct=settling,
        overshoot=overshoot,
        V_excursion=V_exc,
    )


def extract_metrics(ts: TimeSeries, sc: Scenario) -> ScenarioMetrics:
    """
    Settling, overshoot and voltage excursion per power step; plateau
    offsets; droop coefficient when the grid frequency moves.
    """
    t_final = float(ts.t[-1])
    final = ts.window(t_final - STEADY_WINDOW_S, t_final + 1e-12)
    spread = float(np.ptp(ts.p[final])) if final.any() else 0.0
    if spread > STEADY_SPREAD_PU:
        raise NoSteadyState(
            f"scenario '{sc.name}': power varies by {spread:.4f} pu in the final window",
            notes=["extend the scenario duration"],
        )

    V_star = sc.design.V_star
    steps = sc.power_steps
    boundaries = [s.t for s in steps] + [t_final]
    step_metrics = tuple(
        _step_metrics(ts, s.t, boundaries[k + 1], s.p_star, V_star) for k, s in enumerate(steps)
    )

    plateau_ends = sorted({ev.t for ev in sc.events if ev.t > STEADY_WINDOW_S} | {t_final})
    plateaus = []
    for t_end in plateau_ends:
        p_star = sc.p_star_at(t_end - 0.5 * STEADY_WINDOW_S)
        plateaus.append((t_end, p_star, _plateau(ts, t_end)))
    offsets = [p_ss - p_star for _, p_star, p_ss in plateaus]
    steady_offset = max(offsets, key=abs) if offsets else 0.0

    D_p = None
    ramps = sc.ramps
    if ramps:
        base = sc.plant.omega_base
        p_pre = _plateau(ts, ramps[0].t_start)
        w_pre = sc.grid_omega(ramps[0].t_start - 0.5 * STEADY_WINDOW_S)
        dw = (sc.grid_omega(t_final) - w_pre) / base
        if abs(dw) > 0:
            D_p = abs(_plateau(ts, t_final + 1e-12) - p_pre) / abs(dw)

    return ScenarioMetrics(
        name=sc.name,
        steps=step_metrics,
        V_excursion_max=float(np.max(np.abs(ts.V - V_star))),
        steady_p_offset=float(steady_offset),
        omega_tracking_max=float(np.max(np.abs(ts.omega_c - ts.omega_g))),
        D_p=D_p,
        plateaus=tuple(plateaus),
    )
