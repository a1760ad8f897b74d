"""
Operating point and gain design.

The recipe places the observer error poles with ``K_o = k_o psi_g*^T``,
shapes the synchronization loop with ``k_p``, chooses ``k_i`` so the
synchronization loop decouples from the estimation error, and places the
voltage loop poles with ``k_v``. Gains are computed once and then frozen.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .controller import ControllerGains, Setpoints
from .errors import InfeasibleSetpoint, InvalidSpec, SingularFlux
from .numerics import J, as_pole_pair, place_rank_one, rot
from .plant import PlantParams
from .smallsignal import sync_tf_coeffs

logger = logging.getLogger(__name__)

NOMINAL_OMEGA = 2.0 * math.pi * 50.0


@dataclass(frozen=True)
class TuningSpec:
    """Design targets. Poles and ``omega_s`` are in rad/s.

    With ``shape_load_angle`` the load-angle reference is lagged by
    ``2 zeta / omega_s`` so that delta follows ``omega_s^2 / D1(s)`` without overshoot.
    """
    sigma_o: tuple[complex, complex]
    sigma_v: tuple[complex, complex]
    zeta: float
    omega_s: float
    L0_pu: float
    p_star: float = 1.0
    V_star: float = 1.0
    U_g: float = 1.0
    omega0: float = NOMINAL_OMEGA
    shape_load_angle: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "sigma_o", as_pole_pair(self.sigma_o))
        object.__setattr__(self, "sigma_v", as_pole_pair(self.sigma_v))
        for name in ("zeta", "omega_s", "L0_pu", "V_star", "U_g", "omega0"):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidSpec(f"{name} must be positive, got {value}")
        for name in ("sigma_o", "sigma_v"):
            if any(s.real >= 0 for s in getattr(self, name)):
                logger.warning("%s = %s is not in the open left half-plane", name, getattr(self, name))

    @classmethod
    def reference(cls, omega0: float = NOMINAL_OMEGA, **overrides) -> TuningSpec:
        """Reference design: observer poles at -2.5 w0, zeta 0.9, w_s 1.5 w0, voltage poles at -w0."""
        values: dict = dict(
            sigma_o=(-2.5 * omega0, -2.5 * omega0),
            sigma_v=(-omega0, -omega0),
            zeta=0.9,
            omega_s=1.5 * omega0,
            L0_pu=0.5,
            p_star=1.0,
            V_star=1.0,
            U_g=1.0,
            omega0=omega0,
        )
        values.update(overrides)
        return cls(**values)

    def with_p_star(self, p_star: float) -> TuningSpec:
        return replace(self, p_star=p_star)


@dataclass(frozen=True, eq=False)
class Design:
    """Result of ``full_design``; unpacks as ``(gains, setpoints)``."""
    gains: ControllerGains
    setpoints: Setpoints
    spec: TuningSpec
    residuals: dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.gains, self.setpoints))


# =============================================================================
# Operating point
# =============================================================================

def _alpha_p(spec: TuningSpec) -> float:
    return spec.L0_pu / (spec.U_g * spec.V_star)


def load_angle_setpoint(spec: TuningSpec) -> float:
    """Exact load angle ``asin(alpha_p p*)``."""
    x = _alpha_p(spec) * spec.p_star
    if abs(x) > 1.0:
        limit = 1.0 / _alpha_p(spec)
        raise InfeasibleSetpoint(
            f"p* = {spec.p_star} pu exceeds the static transfer limit",
            notes=[f"with L0 = {spec.L0_pu} pu the limit is {limit:.4g} pu"],
        )
    return math.asin(x)


def load_angle_linear(spec: TuningSpec, p_star: float | None = None) -> float:
    """Small-angle approximation ``alpha_p p*``."""
    p = spec.p_star if p_star is None else p_star
    return _alpha_p(spec) * p


def steady_state_targets(
    spec: TuningSpec, delta_star: float, omega_ref: float | None = None
) -> Setpoints:
    """
    Setpoints for a load angle. Fluxes use ``omega_ref`` (default: the
    nominal frequency the designer assumes).
    """
    omega = spec.omega0 if omega_ref is None else omega_ref
    u_c_star = np.array([spec.V_star, 0.0])
    u_g_star = rot(-delta_star) @ np.array([spec.U_g, 0.0])
    return Setpoints(
        p_star=spec.p_star,
        V_star=spec.V_star,
        delta_star=delta_star,
        u_c_star=u_c_star,
        u_g_star=u_g_star,
        psi_g_star=-(J @ u_g_star) / omega,
        psi_star=-(J @ u_c_star) / omega,
        omega_ref=omega,
    )


def setpoints_for(spec: TuningSpec, p_star: float, omega_ref: float | None = None) -> Setpoints:
    """Setpoints for a new ``p*`` with every other TuningSpec field unchanged."""
    shifted = spec.with_p_star(p_star)
    return steady_state_targets(shifted, load_angle_setpoint(shifted), omega_ref)


# =============================================================================
# Gains
# =============================================================================

def design_K_o(spec: TuningSpec, sp: Setpoints) -> tuple[np.ndarray, np.ndarray]:
    k_o = place_rank_one(sp.psi_g_star, spec.omega0, spec.sigma_o)
    return k_o, np.outer(k_o, sp.psi_g_star)


def design_k_p(spec: TuningSpec, sp: Setpoints) -> np.ndarray:
    psi_d, psi_q = sp.psi_g_star
    if math.hypot(psi_d, psi_q) < 1e-12:
        raise SingularFlux("grid flux setpoint is zero; k_p is undetermined")
    M = np.array([[psi_q, -psi_d], [psi_d, psi_q]])
    rhs = np.array([2.0 * spec.zeta * spec.omega_s, spec.omega_s**2 / spec.omega0])
    return np.linalg.solve(M, rhs)


def design_k_i(k_p: np.ndarray, K_o: np.ndarray, omega0: float) -> np.ndarray:
    return k_p @ (omega0 * J + K_o)


def load_angle_lag(spec: TuningSpec) -> float:
    """Reference lag ``2 zeta / omega_s`` that cancels the synchronization zero; 0 when disabled."""
    if not spec.shape_load_angle:
        return 0.0
    return 2.0 * spec.zeta / spec.omega_s


def design_k_v(spec: TuningSpec) -> np.ndarray:
    w = np.array([0.0, -spec.omega0])
    return place_rank_one(w, spec.omega0, spec.sigma_v)


def full_design(spec: TuningSpec, plant: PlantParams | None = None) -> Design:
    """
    Compose the operating point and all gains.

    ``plant`` only supplies the per-unit bases of the controller model;
    its inductance is replaced by ``L0``.
    """
    if plant is None:
        model = PlantParams(L_pu=spec.L0_pu, omega_base=spec.omega0, U_g=spec.U_g)
    else:
        model = replace(plant, L_pu=spec.L0_pu)

    delta_star = load_angle_setpoint(spec)
    sp = steady_state_targets(spec, delta_star)
    k_o, K_o = design_K_o(spec, sp)
    k_p = design_k_p(spec, sp)
    k_i = design_k_i(k_p, K_o, spec.omega0)
    k_v = design_k_v(spec)
    gains = ControllerGains(
        K_o=K_o, k_o=k_o, k_p=k_p, k_i=k_i, k_v=k_v, omega0=spec.omega0, model=model,
        tau_delta=load_angle_lag(spec),
    )

    residuals = identity_residuals(gains, sp, spec)
    logger.info(
        "design: p* = %.4g pu, L0 = %.4g pu, delta* = %.6f rad, max identity residual %.2e",
        spec.p_star, spec.L0_pu, delta_star, max(abs(r) for r in residuals.values()),
    )
    return Design(gains=gains, setpoints=sp, spec=spec, residuals=residuals)


def _placement_residuals(M: np.ndarray, sigma: Sequence[complex]) -> tuple[float, float]:
    s1, s2 = sigma
    trace, det = (s1 + s2).real, (s1 * s2).real
    r_trace = (np.trace(M) - trace) / max(1.0, abs(s1) + abs(s2))
    r_det = (np.linalg.det(M) - det) / max(1.0, abs(s1 * s2))
    return float(r_trace), float(r_det)


def identity_residuals(gains: ControllerGains, sp: Setpoints, spec: TuningSpec) -> dict[str, float]:
    """Relative residuals of every design identity, keyed by name."""
    w0 = spec.omega0
    residuals: dict[str, float] = {}

    A_o = -w0 * J - gains.K_o
    residuals["observer pole trace"], residuals["observer pole product"] = _placement_residuals(
        A_o, spec.sigma_o
    )

    w = np.array([0.0, -w0])
    A_v = -w0 * J - np.outer(gains.k_v, w)
    residuals["voltage pole trace"], residuals["voltage pole product"] = _placement_residuals(
        A_v, spec.sigma_v
    )

    coeffs = sync_tf_coeffs(gains.k_p, sp, w0)
    target_a1 = 2.0 * spec.zeta * spec.omega_s
    target_a2 = spec.omega_s**2
    residuals["sync damping (a1)"] = (coeffs.a1 + target_a1) / max(1.0, target_a1)
    residuals["sync bandwidth (a2)"] = (coeffs.a2 + target_a2) / max(1.0, target_a2)

    cancel = gains.k_i - gains.k_p @ (w0 * J + gains.K_o)
    residuals["k_i cancellation"] = float(np.linalg.norm(cancel) / max(1.0, np.linalg.norm(gains.k_i)))

    coupling = gains.K_o @ (J @ sp.psi_g_star)
    scale = max(np.linalg.norm(gains.K_o) * np.linalg.norm(sp.psi_g_star), 1e-300)
    residuals["decoupling term"] = float(np.linalg.norm(coupling) / scale)

    i_star = (sp.psi_star - sp.psi_g_star) / gains.model.L_sec
    residuals["setpoint power"] = float(sp.u_g_star @ i_star - sp.p_star)
    return residuals
