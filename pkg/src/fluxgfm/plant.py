"""
Grid-connected converter plant.

The converter drives a pure inductance ``L`` towards an ideal grid voltage
source. Quantities are per-unit amplitudes, time is in seconds and every
frequency is in rad/s; the inductance entering the ODE is therefore
``L_sec = L_pu / omega_base``. Power is ``u_g . i`` because the 3/2 factor
is absorbed into the power base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec, ZeroFrequency
from .numerics import J, rot

DEFAULT_F_BASE_HZ = 50.0


@dataclass(frozen=True)
class PlantParams:
    """Per-unit plant parameters and the bases they refer to."""
    L_pu: float
    omega_base: float = 2.0 * math.pi * DEFAULT_F_BASE_HZ
    U_g: float = 1.0
    U_base: float = math.sqrt(2.0 / 3.0) * 380.0
    I_base: float = math.sqrt(2.0) * 30.0
    kappa: float = 1.5
    L_filter_pu: float = 0.1

    def __post_init__(self) -> None:
        if not self.L_pu > 0:
            raise InvalidSpec(f"inductance must be positive, got L = {self.L_pu} pu")
        if not self.omega_base > 0:
            raise InvalidSpec(f"base frequency must be positive, got {self.omega_base} rad/s")
        if not self.U_g > 0:
            raise InvalidSpec(f"grid voltage must be positive, got U_g = {self.U_g} pu")

    @classmethod
    def from_ratings(
        cls,
        L_pu: float,
        U_line_v: float = 380.0,
        I_rated_a: float = 30.0,
        f_base_hz: float = DEFAULT_F_BASE_HZ,
        U_g: float = 1.0,
        L_filter_pu: float = 0.1,
    ) -> PlantParams:
        """Build amplitude bases from line-to-line RMS voltage and RMS current."""
        return cls(
            L_pu=L_pu,
            omega_base=2.0 * math.pi * f_base_hz,
            U_g=U_g,
            U_base=math.sqrt(2.0 / 3.0) * U_line_v,
            I_base=math.sqrt(2.0) * I_rated_a,
            L_filter_pu=L_filter_pu,
        )

    @property
    def L_sec(self) -> float:
        return self.L_pu / self.omega_base

    @property
    def S_base(self) -> float:
        return self.kappa * self.U_base * self.I_base

    @property
    def Z_base(self) -> float:
        return self.U_base / self.I_base

    @property
    def L_base(self) -> float:
        """Base inductance in henry."""
        return self.Z_base / self.omega_base

    @property
    def L_henry(self) -> float:
        return self.L_pu * self.L_base

    @property
    def L_grid_pu(self) -> float:
        """Grid share of the total inductance."""
        return max(0.0, self.L_pu - self.L_filter_pu)

    @property
    def SCR(self) -> float:
        return 1.0 / self.L_pu


@dataclass(frozen=True)
class GridState:
    theta_g: float
    omega_g: float


@dataclass(frozen=True)
class PlantState:
    """Stationary-frame current and grid angle (also used for their rates)."""
    i_s: np.ndarray = field(default_factory=lambda: np.zeros(2))
    theta_g: float = 0.0


def grid_voltage(theta_g: float, U_g: float) -> np.ndarray:
    """Stationary-frame grid voltage ``rot(theta_g) [U_g, 0]``."""
    return U_g * np.array([math.cos(theta_g), math.sin(theta_g)])


def plant_derivative(
    x: PlantState, u_c_s: np.ndarray, grid: GridState, p: PlantParams
) -> PlantState:
    """Rates of the stationary-frame plant: ``di/dt = (u_c - u_g) / L``."""
    u_g_s = grid_voltage(x.theta_g, p.U_g)
    di = (np.asarray(u_c_s, dtype=float) - u_g_s) / p.L_sec
    return PlantState(i_s=di, theta_g=grid.omega_g)


def plant_derivative_dq(
    i: np.ndarray,
    delta: float,
    u_c: np.ndarray,
    omega_c: float,
    omega_g: float,
    p: PlantParams,
) -> tuple[np.ndarray, float]:
    """
    Plant rates in a frame rotating at ``omega_c``.

    ``delta`` is the controller frame angle relative to the grid; the grid
    voltage seen from the controller frame is ``rot(-delta) [U_g, 0]``.
    """
    u_g = rot(-delta) @ np.array([p.U_g, 0.0])
    di = -omega_c * (J @ i) + (np.asarray(u_c, dtype=float) - u_g) / p.L_sec
    return di, omega_c - omega_g


def to_controller_frame(v_s: np.ndarray, theta_c: float) -> np.ndarray:
    return rot(-theta_c) @ np.asarray(v_s, dtype=float)


def from_controller_frame(v: np.ndarray, theta_c: float) -> np.ndarray:
    return rot(theta_c) @ np.asarray(v, dtype=float)


def active_power(u_g: np.ndarray, i: np.ndarray) -> float:
    """Per-unit active power; frame invariant."""
    return float(np.dot(u_g, i))


def pcc_voltage_mag(u_c: np.ndarray) -> float:
    return float(math.hypot(u_c[0], u_c[1]))


def virtual_flux(i: np.ndarray, u_g: np.ndarray, omega_g: float, p: PlantParams) -> np.ndarray:
    """``psi = L i + psi_g`` with ``psi_g = (omega_g J)^-1 u_g = -J u_g / omega_g`` (pu*s)."""
    if abs(omega_g) < 1e-6 * p.omega_base:
        raise ZeroFrequency(f"virtual flux is undefined at omega_g = {omega_g} rad/s")
    return p.L_sec * np.asarray(i, dtype=float) - (J @ np.asarray(u_g, dtype=float)) / omega_g
