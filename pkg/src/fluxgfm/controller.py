"""
Virtual-flux grid-forming control law.

The controller runs in its own dq frame at angle ``theta_c``:

    e       = L0 i + psi_g* - psi_hat              (observer error)
    omega_c = k_i gamma + k_p e                    (PI frequency estimate)
    psi_hat' = -omega_c J psi_hat + u_c + K_o e    (flux observer)
    gamma'  = e
    theta_c' = omega_c
    u_c     = u_c* + k_v (V* - omega_c |psi_hat|)  (voltage command)

The load-angle reference reaches ``psi_g*`` through a first-order lag with
time constant ``tau_delta = 2 zeta / omega_s``; this cancels the zero of the
synchronization loop so that delta follows ``omega_s^2 / D1(s)``.

``L0`` is the controller's model inductance, carried by ``ControllerGains.model``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import J, rot
from .plant import PlantParams, to_controller_frame

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Frozen gain set produced by ``tuning.full_design``."""
    K_o: np.ndarray
    k_o: np.ndarray
    k_p: np.ndarray
    k_i: np.ndarray
    k_v: np.ndarray
    omega0: float
    model: PlantParams
    tau_delta: float = 0.0

    def gamma_bias(self, omega: float | None = None) -> np.ndarray:
        """Minimum-norm integrator state with ``k_i . gamma = omega``."""
        omega = self.omega0 if omega is None else omega
        return self.k_i * (omega / float(self.k_i @ self.k_i))

    def to_dict(self) -> dict:
        return {
            "omega0_rad_s": self.omega0,
            "L0_pu": self.model.L_pu,
            "k_o": self.k_o.tolist(),
            "K_o": self.K_o.tolist(),
            "k_p": self.k_p.tolist(),
            "k_i": self.k_i.tolist(),
            "k_v": self.k_v.tolist(),
            "tau_delta_s": self.tau_delta,
        }


@dataclass(frozen=True, eq=False)
class Setpoints:
    """Operating-point constellation derived from ``p*`` and ``V*``."""
    p_star: float
    V_star: float
    delta_star: float
    u_c_star: np.ndarray
    u_g_star: np.ndarray
    psi_g_star: np.ndarray
    psi_star: np.ndarray
    omega_ref: float

    def to_dict(self) -> dict:
        return {
            "p_star_pu": self.p_star,
            "V_star_pu": self.V_star,
            "delta_star_rad": self.delta_star,
            "u_c_star": self.u_c_star.tolist(),
            "u_g_star": self.u_g_star.tolist(),
            "psi_g_star": self.psi_g_star.tolist(),
            "psi_star": self.psi_star.tolist(),
            "omega_ref_rad_s": self.omega_ref,
        }

    def at_load_angle(self, delta: float) -> Setpoints:
        """Same setpoints with ``u_g*`` and ``psi_g*`` rotated to load angle ``delta``."""
        if delta == self.delta_star:
            return self
        R = rot(-(delta - self.delta_star))
        return replace(
            self, delta_star=float(delta), u_g_star=R @ self.u_g_star, psi_g_star=R @ self.psi_g_star
        )


@dataclass(frozen=True, eq=False)
class ControllerState:
    psi_hat: np.ndarray
    gamma: np.ndarray
    theta_c: float = 0.0


@dataclass(frozen=True, eq=False)
class ControllerOutput:
    """Algebraic signals of one controller evaluation (controller frame)."""
    i: np.ndarray
    e: np.ndarray
    omega_c: float
    u_c: np.ndarray
    V_hat: float


def lag_load_angle(delta_ref: float, delta_star: float, dt: float, tau: float) -> float:
    """Advance the load-angle reference lag by ``dt`` with the input held (exact for a step)."""
    if tau <= 0:
        return delta_star
    return delta_star + (delta_ref - delta_star) * math.exp(-dt / tau)


def observer_error(i: np.ndarray, psi_hat: np.ndarray, p: PlantParams, sp: Setpoints) -> np.ndarray:
    return p.L_sec * np.asarray(i, dtype=float) + sp.psi_g_star - psi_hat


def estimate_frequency(gamma: np.ndarray, e: np.ndarray, g: ControllerGains) -> float:
    return float(g.k_i @ gamma + g.k_p @ e)


def observer_derivative(
    cs: ControllerState,
    i_dq: np.ndarray,
    u_c: np.ndarray,
    omega_c: float,
    g: ControllerGains,
    p: PlantParams,
    sp: Setpoints,
) -> ControllerState:
    """Rates of ``(psi_hat, gamma, theta_c)`` returned as a ControllerState."""
    e = observer_error(i_dq, cs.psi_hat, p, sp)
    dpsi = -omega_c * (J @ cs.psi_hat) + u_c + g.K_o @ e
    return ControllerState(psi_hat=dpsi, gamma=e, theta_c=omega_c)


def voltage_command(psi_hat: np.ndarray, omega_c: float, g: ControllerGains, sp: Setpoints) -> np.ndarray:
    V_hat = omega_c * math.hypot(psi_hat[0], psi_hat[1])
    return sp.u_c_star + g.k_v * (sp.V_star - V_hat)


def evaluate(
    cs: ControllerState, i_dq: np.ndarray, g: ControllerGains, p: PlantParams, sp: Setpoints
) -> ControllerOutput:
    e = observer_error(i_dq, cs.psi_hat, p, sp)
    omega_c = estimate_frequency(cs.gamma, e, g)
    u_c = voltage_command(cs.psi_hat, omega_c, g, sp)
    V_hat = omega_c * math.hypot(cs.psi_hat[0], cs.psi_hat[1])
    return ControllerOutput(i=np.asarray(i_dq, dtype=float), e=e, omega_c=omega_c, u_c=u_c, V_hat=V_hat)


def controller_step(
    cs: ControllerState,
    i_s: np.ndarray,
    dt: float,
    g: ControllerGains,
    p: PlantParams,
    sp: Setpoints,
    zoh_compensation: bool = False,
) -> tuple[ControllerState, np.ndarray]:
    """
    One sampled-data update (forward Euler).

    Returns the advanced state and the stationary-frame voltage to hold
    until the next call. With ``zoh_compensation`` the held voltage is
    rotated half a sample ahead so it is centred on the frame angle over
    the hold interval.
    """
    state, u_c_s, _ = _step(cs, i_s, dt, g, p, sp, zoh_compensation)
    return state, u_c_s


def _step(
    cs: ControllerState,
    i_s: np.ndarray,
    dt: float,
    g: ControllerGains,
    p: PlantParams,
    sp: Setpoints,
    zoh_compensation: bool,
) -> tuple[ControllerState, np.ndarray, ControllerOutput]:
    if dt <= 0:
        raise ValueError(f"controller step must be positive, got {dt}")
    i_dq = to_controller_frame(i_s, cs.theta_c)
    out = evaluate(cs, i_dq, g, p, sp)
    rates = observer_derivative(cs, i_dq, out.u_c, out.omega_c, g, p, sp)
    advanced = ControllerState(
        psi_hat=cs.psi_hat + dt * rates.psi_hat,
        gamma=cs.gamma + dt * rates.gamma,
        theta_c=cs.theta_c + dt * rates.theta_c,
    )
    angle = cs.theta_c + (0.5 * dt * out.omega_c if zoh_compensation else 0.0)
    return advanced, rot(angle) @ out.u_c, out


@dataclass
class Controller:
    """
    Stateful wrapper around the control law.

    Gains stay frozen for the lifetime of the instance; setpoints may be
    replaced with ``update_setpoints`` (e.g. on a power step). ``setpoints``
    holds the values in use, whose load angle lags ``target`` by
    ``gains.tau_delta``.
    """
    gains: ControllerGains
    setpoints: Setpoints
    zoh_compensation: bool = True
    state: ControllerState = field(init=False)
    last_output: ControllerOutput | None = field(init=False, default=None)
    target: Setpoints = field(init=False)
    delta_ref: float = field(init=False)

    def __post_init__(self) -> None:
        self.target = self.setpoints
        self.reset()

    def reset(
        self,
        psi_hat: np.ndarray | None = None,
        gamma: np.ndarray | None = None,
        theta_c: float = 0.0,
    ) -> None:
        """Cold start: ``psi_hat = psi_g*``, ``k_i . gamma = omega0``, lag settled on the target."""
        self.setpoints = self.target
        self.delta_ref = self.target.delta_star
        self.state = ControllerState(
            psi_hat=np.array(self.setpoints.psi_g_star if psi_hat is None else psi_hat, dtype=float),
            gamma=np.array(self.gains.gamma_bias() if gamma is None else gamma, dtype=float),
            theta_c=float(theta_c),
        )
        self.last_output = None

    def update_setpoints(self, setpoints: Setpoints) -> None:
        logger.debug(
            "setpoints updated: p* %.4g -> %.4g pu", self.target.p_star, setpoints.p_star
        )
        self.target = setpoints
        if self.gains.tau_delta <= 0:
            self.delta_ref = setpoints.delta_star
        self.setpoints = setpoints.at_load_angle(self.delta_ref)

    def output(self, i_s: np.ndarray) -> ControllerOutput:
        i_dq = to_controller_frame(i_s, self.state.theta_c)
        return evaluate(self.state, i_dq, self.gains, self.gains.model, self.setpoints)

    def step(self, i_s: np.ndarray, dt: float) -> np.ndarray:
        """Advance one sample; returns the stationary-frame voltage to hold."""
        self.state, u_c_s, self.last_output = _step(
            self.state, i_s, dt, self.gains, self.gains.model, self.setpoints, self.zoh_compensation
        )
        self.delta_ref = lag_load_angle(self.delta_ref, self.target.delta_star, dt, self.gains.tau_delta)
        self.setpoints = self.target.at_load_angle(self.delta_ref)
        return u_c_s
