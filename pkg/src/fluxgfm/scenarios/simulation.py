"""
Nonlinear time-domain simulation of plant and controller.

Continuous mode co-integrates the stationary-frame plant and the controller
with RK4. Sampled mode runs the controller at the sampling rate (forward
Euler, zero-order hold) and integrates the plant with RK4 substeps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from ..controller import Controller, ControllerGains, Setpoints
from ..errors import NonFiniteState, SimulationDiverged
from ..numerics import rk4_step, rot, wrap_angle
from ..tuning import full_design, setpoints_for
from .definitions import PowerStep, Scenario

logger = logging.getLogger(__name__)

CHANNELS = (
    "p", "V", "V_hat", "omega_c", "omega_g", "delta",
    "i_d", "i_q", "u_c_d", "u_c_q", "psi_hat_d", "psi_hat_q", "e_d", "e_q",
)

DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled traces; every channel has the length of ``t``."""
    t: np.ndarray
    p: np.ndarray
    V: np.ndarray
    V_hat: np.ndarray
    omega_c: np.ndarray
    omega_g: np.ndarray
    delta: np.ndarray
    i_d: np.ndarray
    i_q: np.ndarray
    u_c_d: np.ndarray
    u_c_q: np.ndarray
    psi_hat_d: np.ndarray
    psi_hat_q: np.ndarray
    e_d: np.ndarray
    e_q: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        for f in fields(self):
            values = np.asarray(getattr(self, f.name), dtype=float)
            if len(values) != n:
                raise ValueError(f"channel '{f.name}' has {len(values)} samples, expected {n}")
            object.__setattr__(self, f.name, values)

    def __len__(self) -> int:
        return len(self.t)

    @classmethod
    def from_rows(cls, rows: list[tuple[float, ...]]) -> TimeSeries:
        data = np.array(rows, dtype=float).reshape(-1, len(CHANNELS) + 1)
        return cls(t=data[:, 0], **{name: data[:, k + 1] for k, name in enumerate(CHANNELS)})

    def channel(self, name: str) -> np.ndarray:
        if name != "t" and name not in CHANNELS:
            raise KeyError(name)
        return getattr(self, name)

    def window(self, t0: float, t1: float) -> np.ndarray:
        """Boolean mask for ``t0 <= t < t1``."""
        return (self.t >= t0) & (self.t < t1)

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.t] + [getattr(self, name) for name in CHANNELS])


# =============================================================================
# Continuous mode
# =============================================================================

class _ContinuousLoop:
    """
    Composite vector field on
    ``[i_a, i_b, theta_g, psi_d, psi_q, gamma_d, gamma_q, theta_c, delta_ref]``;
    ``delta_ref`` is the lagged load-angle reference.

    Evaluated with plain floats; this is the inner loop of every run.
    """

    def __init__(self, sc: Scenario, gains: ControllerGains, sp: Setpoints):
        self.sc = sc
        self.L = sc.plant.L_sec
        self.Lc = gains.model.L_sec
        self.U = sc.plant.U_g
        self.K = gains.K_o.ravel().tolist()
        self.kp = gains.k_p.tolist()
        self.ki = gains.k_i.tolist()
        self.kv = gains.k_v.tolist()
        self.tau = gains.tau_delta
        self.set_setpoints(sp)

    def set_setpoints(self, sp: Setpoints) -> None:
        self.delta_star = sp.delta_star
        self.pg = sp.psi_g_star.tolist()
        self.uc = sp.u_c_star.tolist()
        self.V_star = sp.V_star

    def signals(self, x: list[float]) -> tuple[float, ...]:
        ia, ib, _, pd, pq, gd, gq, thc, dref = x
        c, s = math.cos(thc), math.sin(thc)
        i_d = c * ia + s * ib
        i_q = -s * ia + c * ib
        # psi_g* rotated from the target load angle back to the lagged one
        cr, sr = math.cos(dref - self.delta_star), math.sin(dref - self.delta_star)
        e_d = self.Lc * i_d + cr * self.pg[0] + sr * self.pg[1] - pd
        e_q = self.Lc * i_q - sr * self.pg[0] + cr * self.pg[1] - pq
        w_c = self.ki[0] * gd + self.ki[1] * gq + self.kp[0] * e_d + self.kp[1] * e_q
        V_hat = w_c * math.hypot(pd, pq)
        u_d = self.uc[0] + self.kv[0] * (self.V_star - V_hat)
        u_q = self.uc[1] + self.kv[1] * (self.V_star - V_hat)
        return i_d, i_q, e_d, e_q, w_c, V_hat, u_d, u_q

    def __call__(self, t: float, xa: np.ndarray) -> np.ndarray:
        x = xa.tolist()
        _, _, thg, pd, pq, _, _, thc, dref = x
        _, _, e_d, e_q, w_c, _, u_d, u_q = self.signals(x)
        K = self.K
        dpd = w_c * pq + u_d + K[0] * e_d + K[1] * e_q
        dpq = -w_c * pd + u_q + K[2] * e_d + K[3] * e_q
        c, s = math.cos(thc), math.sin(thc)
        dia = (c * u_d - s * u_q - self.U * math.cos(thg)) / self.L
        dib = (s * u_d + c * u_q - self.U * math.sin(thg)) / self.L
        ddref = (self.delta_star - dref) / self.tau if self.tau > 0 else 0.0
        return np.array([dia, dib, self.sc.grid_omega(t), dpd, dpq, e_d, e_q, w_c, ddref])

    def record(self, t: float, xa: np.ndarray) -> tuple[float, ...]:
        x = xa.tolist()
        ia, ib, thg, pd, pq, _, _, thc, _ = x
        i_d, i_q, e_d, e_q, w_c, V_hat, u_d, u_q = self.signals(x)
        p = self.U * (math.cos(thg) * ia + math.sin(thg) * ib)
        return (
            t, p, math.hypot(u_d, u_q), V_hat, w_c, self.sc.grid_omega(t),
            wrap_angle(thc - thg), i_d, i_q, u_d, u_q, pd, pq, e_d, e_q,
        )


def _initial_state(sc: Scenario, gains: ControllerGains, sp: Setpoints) -> np.ndarray:
    """Design operating point of the initial setpoint, grid angle zero."""
    i_dq = (sp.psi_star - sp.psi_g_star) / gains.model.L_sec
    theta_c = sp.delta_star
    i_s = rot(theta_c) @ i_dq
    gamma = gains.gamma_bias()
    return np.array([
        i_s[0], i_s[1], 0.0, sp.psi_star[0], sp.psi_star[1], gamma[0], gamma[1], theta_c, sp.delta_star,
    ])


def _events_by_index(sc: Scenario, dt: float) -> dict[int, list[PowerStep]]:
    table: dict[int, list[PowerStep]] = {}
    for step in sc.power_steps:
        table.setdefault(int(round(step.t / dt)), []).append(step)
    return table


def _check_bounded(x: np.ndarray, t: float) -> None:
    if not np.all(np.abs(x) < DIVERGENCE_LIMIT):
        raise SimulationDiverged("state left the bounded region", time=t)


def _simulate_continuous(sc: Scenario, gains: ControllerGains, sp: Setpoints) -> TimeSeries:
    h = sc.step_s
    n_steps = int(round(sc.duration / h))
    decimation = int(round(1.0 / (h * sc.output_rate_hz)))
    events = _events_by_index(sc, h)

    loop = _ContinuousLoop(sc, gains, sp)
    x = _initial_state(sc, gains, sp)
    rows = []
    for n in range(n_steps + 1):
        t = n * h
        for step in events.get(n, ()):
            logger.debug("t = %.4f s: power step to p* = %.4g pu", t, step.p_star)
            loop.set_setpoints(setpoints_for(sc.design, step.p_star))
            if loop.tau <= 0:
                x = x.copy()
                x[8] = loop.delta_star
        if n % decimation == 0:
            rows.append(loop.record(t, x))
        if n == n_steps:
            break
        try:
            x = rk4_step(loop, x, t, h)
        except NonFiniteState as exc:
            raise SimulationDiverged(f"scenario '{sc.name}' diverged", time=exc.time) from exc
        _check_bounded(x, t)
    return TimeSeries.from_rows(rows)


# =============================================================================
# Sampled mode
# =============================================================================

def _simulate_sampled(sc: Scenario, gains: ControllerGains, sp: Setpoints) -> TimeSeries:
    h = sc.step_s
    n_steps = int(round(sc.duration / h))
    decimation = int(round(1.0 / (h * sc.output_rate_hz)))
    substeps = int(round(1.0 / (h * sc.sample_rate_hz)))
    Ts = substeps * h
    events = _events_by_index(sc, Ts)

    x0 = _initial_state(sc, gains, sp)
    plant = x0[0:3].copy()
    ctrl = Controller(gains, sp, zoh_compensation=sc.zoh_compensation)
    ctrl.reset(psi_hat=x0[3:5], gamma=x0[5:7], theta_c=x0[7])

    L, U = sc.plant.L_sec, sc.plant.U_g
    u_hold = np.zeros(2)

    def plant_rates(t: float, y: np.ndarray) -> np.ndarray:
        thg = y[2]
        return np.array([
            (u_hold[0] - U * math.cos(thg)) / L,
            (u_hold[1] - U * math.sin(thg)) / L,
            sc.grid_omega(t),
        ])

    rows = []
    theta_k = ctrl.state.theta_c
    t_k = 0.0
    for n in range(n_steps + 1):
        t = n * h
        if n % substeps == 0:
            for step in events.get(n // substeps, ()):
                logger.debug("t = %.4f s: power step to p* = %.4g pu", t, step.p_star)
                ctrl.update_setpoints(setpoints_for(sc.design, step.p_star))
            theta_k, t_k = ctrl.state.theta_c, t
            u_hold = ctrl.step(plant[0:2], Ts)
        out = ctrl.last_output
        assert out is not None
        if n % decimation == 0:
            thg = plant[2]
            theta_c = theta_k + out.omega_c * (t - t_k)
            i_dq = rot(-theta_c) @ plant[0:2]
            p = U * (math.cos(thg) * plant[0] + math.sin(thg) * plant[1])
            rows.append((
                t, p, math.hypot(out.u_c[0], out.u_c[1]), out.V_hat, out.omega_c,
                sc.grid_omega(t), wrap_angle(theta_c - thg), i_dq[0], i_dq[1],
                out.u_c[0], out.u_c[1], ctrl.state.psi_hat[0], ctrl.state.psi_hat[1],
                out.e[0], out.e[1],
            ))
        if n == n_steps:
            break
        try:
            plant = rk4_step(plant_rates, plant, t, h)
        except NonFiniteState as exc:
            raise SimulationDiverged(f"scenario '{sc.name}' diverged", time=exc.time) from exc
        _check_bounded(plant, t)
        _check_bounded(ctrl.state.psi_hat, t)
    return TimeSeries.from_rows(rows)


def simulate(sc: Scenario) -> TimeSeries:
    """
    Run a scenario. Gains are designed once from ``sc.design`` and frozen;
    power steps only recompute the setpoints.
    """
    design = full_design(sc.design, sc.plant)
    sp = setpoints_for(sc.design, sc.p_star_initial)
    logger.info(
        "simulating '%s': %s mode, L = %.4g pu, %.3g s", sc.name, sc.mode, sc.plant.L_pu, sc.duration
    )
    if sc.mode == "sampled":
        return _simulate_sampled(sc, design.gains, sp)
    return _simulate_continuous(sc, design.gains, sp)
