"""
Small-signal model of the closed loop.

State order: ``[i_d, i_q, delta, psi_hat_d, psi_hat_q, gamma_d, gamma_q]``.
``omega_c`` and ``u_c`` are algebraic and eliminated. The integrator state
only enters through ``sigma = k_i . gamma``; the component of ``gamma``
orthogonal to ``k_i`` is a structural zero mode that feeds nothing back.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import root

from .controller import ControllerGains, Setpoints
from .errors import FluxGFMError, InvalidSpec, NoEquilibrium, NonFiniteState
from .formatting import format_float
from .numerics import J, Spectrum, eig_small, rk4_step
from .plant import PlantParams

logger = logging.getLogger(__name__)

STATE_LABELS = ("i_d", "i_q", "delta", "psi_hat_d", "psi_hat_q", "gamma_d", "gamma_q")
REDUCED_LABELS = ("i_d", "i_q", "delta", "psi_hat_d", "psi_hat_q", "sigma_omega", "gamma_perp")
ERROR_LABELS = ("psi_err_d", "psi_err_q", "delta", "sigma_omega", "psi_d", "psi_q", "gamma_perp")

NEWTON_TOL = 1e-10
FALLBACK_TOL = 1e-8


# =============================================================================
# Synchronization loop
# =============================================================================

@dataclass(frozen=True)
class SyncCoeffs:
    """``D1(s) = s^2 - a1 s - a2``."""
    a1: float
    a2: float

    def characteristic_roots(self) -> np.ndarray:
        return np.roots([1.0, -self.a1, -self.a2])


def sync_tf_coeffs(k_p: np.ndarray, sp: Setpoints, omega0: float) -> SyncCoeffs:
    a1 = float(k_p @ (J @ sp.psi_g_star))
    a2 = float(-omega0 * (k_p @ sp.psi_g_star))
    return SyncCoeffs(a1=a1, a2=a2)


def sync_transfer_matrix(coeffs: SyncCoeffs, s: complex) -> np.ndarray:
    """Transfer matrix from ``[delta*, omega_g]`` to ``[delta, omega_c]``."""
    a1, a2 = coeffs.a1, coeffs.a2
    D1 = s * s - a1 * s - a2
    return np.array([[-a2, -s], [-a2 * s, -a1 * s - a2]], dtype=complex) / D1


def static_gain(coeffs: SyncCoeffs) -> np.ndarray:
    return sync_transfer_matrix(coeffs, 0.0).real


def approximate_voltage_linearization(
    gains: ControllerGains, sp: Setpoints
) -> tuple[np.ndarray, np.ndarray]:
    """
    Voltage loop with the flux estimate taken equal to the true flux.

    Returns ``(A_v, B_v)`` with ``d(dpsi)/dt = A_v dpsi + B_v domega_c``;
    ``eig(A_v)`` is the placed voltage pole pair.
    """
    w0 = gains.omega0
    psi_norm = float(np.linalg.norm(sp.psi_star))
    w = w0 * sp.psi_star / psi_norm
    A_v = -(w0 * J + np.outer(gains.k_v, w))
    B_v = -(J @ sp.psi_star + psi_norm * gains.k_v)
    return A_v, B_v


# =============================================================================
# Closed-loop vector field
# =============================================================================

class ClosedLoop:
    """Nonlinear closed loop in the controller frame for a fixed grid frequency."""

    def __init__(self, gains: ControllerGains, sp: Setpoints, plant: PlantParams, omega_g: float):
        self.gains = gains
        self.sp = sp
        self.plant = plant
        self.omega_g = float(omega_g)
        self._k_i_sq = float(gains.k_i @ gains.k_i)
        if self._k_i_sq == 0.0:
            raise InvalidSpec("k_i is zero; the frequency integrator is disconnected")

    # -- full state -----------------------------------------------------------

    def field(self, x: np.ndarray) -> np.ndarray:
        g, sp = self.gains, self.sp
        i, delta, psi, gamma = x[0:2], x[2], x[3:5], x[5:7]
        e = g.model.L_sec * i + sp.psi_g_star - psi
        omega_c = float(g.k_i @ gamma + g.k_p @ e)
        u_c = sp.u_c_star + g.k_v * (sp.V_star - omega_c * math.hypot(psi[0], psi[1]))
        u_g = self.plant.U_g * np.array([math.cos(delta), -math.sin(delta)])
        di = -omega_c * (J @ i) + (u_c - u_g) / self.plant.L_sec
        dpsi = -omega_c * (J @ psi) + u_c + g.K_o @ e
        return np.concatenate((di, [omega_c - self.omega_g], dpsi, e))

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """Analytic Jacobian of ``field`` at ``x``."""
        g, sp = self.gains, self.sp
        i, delta, psi, gamma = x[0:2], x[2], x[3:5], x[5:7]
        e = g.model.L_sec * i + sp.psi_g_star - psi
        omega_c = float(g.k_i @ gamma + g.k_p @ e)
        norm = math.hypot(psi[0], psi[1])
        u_g = self.plant.U_g * np.array([math.cos(delta), -math.sin(delta)])

        dE = np.zeros((2, 7))
        dE[:, 0:2] = g.model.L_sec * np.eye(2)
        dE[:, 3:5] = -np.eye(2)

        dW = g.k_p @ dE
        dW[5:7] += g.k_i

        n_hat = np.zeros(7)
        if norm > 0:
            n_hat[3:5] = psi / norm
        dU = -np.outer(g.k_v, norm * dW + omega_c * n_hat)

        dUg = np.zeros((2, 7))
        dUg[:, 2] = -(J @ u_g)

        A = np.zeros((7, 7))
        A[0:2, 0:2] = -omega_c * J
        A[0:2] += -np.outer(J @ i, dW) + (dU - dUg) / self.plant.L_sec
        A[2] = dW
        A[3:5, 3:5] = -omega_c * J
        A[3:5] += -np.outer(J @ psi, dW) + dU + g.K_o @ dE
        A[5:7] = dE
        return A

    # -- reduced state [i, delta, psi_hat, sigma] -------------------------------

    def expand(self, y: np.ndarray) -> np.ndarray:
        """Full state with the minimum-norm ``gamma`` for ``sigma``."""
        gamma = self.gains.k_i * (y[5] / self._k_i_sq)
        return np.concatenate((y[0:5], gamma))

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return np.concatenate((x[0:5], [self.gains.k_i @ x[5:7]]))

    def reduced_field(self, y: np.ndarray) -> np.ndarray:
        f = self.field(self.expand(y))
        return np.concatenate((f[0:5], [self.gains.k_i @ f[5:7]]))

    def reduced_jacobian(self, y: np.ndarray) -> np.ndarray:
        P = np.zeros((6, 7))
        P[0:5, 0:5] = np.eye(5)
        P[5, 5:7] = self.gains.k_i
        Q = np.zeros((7, 6))
        Q[0:5, 0:5] = np.eye(5)
        Q[5:7, 5] = self.gains.k_i / self._k_i_sq
        return P @ self.jacobian(self.expand(y)) @ Q

    # Dimensionless scaling: time in 1/omega0, flux in 1/omega0, sigma in omega0.

    def _scales(self) -> tuple[np.ndarray, np.ndarray]:
        w0 = self.gains.omega0
        D_z = np.array([1.0, 1.0, 1.0, w0, w0, 1.0 / w0])
        D_r = np.array([1.0 / w0, 1.0 / w0, 1.0 / w0, 1.0, 1.0, 1.0 / w0**2])
        return D_z, D_r

    def scaled_residual(self, y: np.ndarray) -> float:
        _, D_r = self._scales()
        return float(np.max(np.abs(D_r * self.reduced_field(y))))

    def design_seed(self) -> np.ndarray:
        sp = self.sp
        i_star = (sp.psi_star - sp.psi_g_star) / self.gains.model.L_sec
        return np.concatenate((i_star, [sp.delta_star], sp.psi_star, [self.omega_g]))


def closed_loop_field(
    gains: ControllerGains, sp: Setpoints, plant: PlantParams, omega_g: float | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """The 7-state closed-loop vector field as a plain callable."""
    loop = ClosedLoop(gains, sp, plant, gains.omega0 if omega_g is None else omega_g)
    return loop.field


# =============================================================================
# Equilibrium
# =============================================================================

@dataclass(frozen=True, eq=False)
class Equilibrium:
    """
    Operating point of the closed loop.

    ``gamma_drift`` is the constant rate of the integrator state; only its
    component orthogonal to ``k_i`` can be nonzero.
    """
    x: np.ndarray
    omega_g: float
    omega_c: float
    e: np.ndarray
    u_c: np.ndarray
    u_g: np.ndarray
    p: float
    V: float
    V_hat: float
    residual: float
    method: str

    @property
    def i(self) -> np.ndarray:
        return self.x[0:2]

    @property
    def delta(self) -> float:
        return float(self.x[2])

    @property
    def psi_hat(self) -> np.ndarray:
        return self.x[3:5]

    @property
    def gamma(self) -> np.ndarray:
        return self.x[5:7]

    @property
    def gamma_drift(self) -> np.ndarray:
        return self.e

    def to_dict(self) -> dict:
        return {
            "state": dict(zip(STATE_LABELS, self.x.tolist())),
            "omega_g_rad_s": self.omega_g,
            "omega_c_rad_s": self.omega_c,
            "p_pu": self.p,
            "V_pu": self.V,
            "V_hat_pu": self.V_hat,
            "e": self.e.tolist(),
            "residual": self.residual,
            "method": self.method,
        }


def _newton(loop: ClosedLoop, y0: np.ndarray) -> tuple[np.ndarray, float]:
    D_z, D_r = loop._scales()

    def fun(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = z / D_z
        r = D_r * loop.reduced_field(y)
        jac = D_r[:, None] * loop.reduced_jacobian(y) / D_z[None, :]
        return r, jac

    try:
        sol = root(fun, D_z * y0, jac=True, method="hybr", options={"xtol": 1e-14})
    except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
        logger.debug("Newton solve raised %s", exc)
        return y0, math.inf
    y = sol.x / D_z
    if not np.all(np.isfinite(y)):
        return y0, math.inf
    return y, loop.scaled_residual(y)


def _settle_by_simulation(loop: ClosedLoop, y0: np.ndarray) -> np.ndarray:
    """Integrate the reduced loop for 100 nominal cycles and average the last one."""
    period = 2.0 * math.pi / loop.gains.omega0
    h = period / 2000.0
    n_steps = 100 * 2000

    def f(_t: float, y: np.ndarray) -> np.ndarray:
        return loop.reduced_field(y)

    y = y0.copy()
    tail = []
    for n in range(n_steps):
        y = rk4_step(f, y, n * h, h)
        if n >= n_steps - 2000:
            tail.append(y)
    return np.mean(tail, axis=0)


def _build_equilibrium(loop: ClosedLoop, y: np.ndarray, residual: float, method: str) -> Equilibrium:
    g, sp = loop.gains, loop.sp
    x = loop.expand(y)
    i, delta, psi = x[0:2], x[2], x[3:5]
    e = g.model.L_sec * i + sp.psi_g_star - psi
    omega_c = float(g.k_i @ x[5:7] + g.k_p @ e)
    V_hat = omega_c * math.hypot(psi[0], psi[1])
    u_c = sp.u_c_star + g.k_v * (sp.V_star - V_hat)
    u_g = loop.plant.U_g * np.array([math.cos(delta), -math.sin(delta)])
    return Equilibrium(
        x=x,
        omega_g=loop.omega_g,
        omega_c=omega_c,
        e=e,
        u_c=u_c,
        u_g=u_g,
        p=float(u_g @ i),
        V=float(np.linalg.norm(u_c)),
        V_hat=V_hat,
        residual=residual,
        method=method,
    )


def find_equilibrium(
    gains: ControllerGains, sp: Setpoints, plant: PlantParams, omega_g: float | None = None
) -> Equilibrium:
    """
    Operating point of the closed loop with plant ``plant`` at ``omega_g``.

    Newton iteration on the reduced dimensionless field, seeded from the
    design targets; falls back to simulating the loop when Newton fails.
    """
    loop = ClosedLoop(gains, sp, plant, gains.omega0 if omega_g is None else omega_g)
    seed = loop.design_seed()

    y, residual = _newton(loop, seed)
    if residual < NEWTON_TOL:
        return _build_equilibrium(loop, y, residual, "newton")

    logger.warning(
        "Newton did not converge for L = %.4g pu, omega_g = %.6g rad/s (residual %.2e); simulating",
        plant.L_pu, loop.omega_g, residual,
    )
    try:
        settled = _settle_by_simulation(loop, seed)
    except NonFiniteState as exc:
        raise NoEquilibrium(
            f"closed loop diverged while searching the equilibrium for L = {plant.L_pu} pu",
            notes=[str(exc)],
        ) from exc

    y, residual = _newton(loop, settled)
    if residual < NEWTON_TOL:
        return _build_equilibrium(loop, y, residual, "simulation+newton")
    residual = loop.scaled_residual(settled)
    if residual < FALLBACK_TOL:
        return _build_equilibrium(loop, settled, residual, "simulation")
    raise NoEquilibrium(
        f"no equilibrium for L = {plant.L_pu} pu, omega_g = {loop.omega_g:.6g} rad/s",
        notes=[f"final residual {residual:.3e} exceeds {FALLBACK_TOL:.0e}"],
    )


# =============================================================================
# Linear model
# =============================================================================

def numeric_jacobian(
    f: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, rel_step: float = 1e-6
) -> np.ndarray:
    """Central differences with ``h_j = rel_step * max(1, |x0_j|)``."""
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(f(x0), dtype=float)
    jac = np.zeros((f0.size, x0.size))
    for j in range(x0.size):
        h = rel_step * max(1.0, abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return jac


@dataclass(frozen=True, eq=False)
class ClosedLoopModel:
    A: np.ndarray
    equilibrium: Equilibrium
    gains: ControllerGains
    setpoints: Setpoints
    plant: PlantParams
    labels: tuple[str, ...] = STATE_LABELS

    @property
    def L_pu(self) -> float:
        return self.plant.L_pu

    @property
    def omega_g(self) -> float:
        return self.equilibrium.omega_g

    def loop(self) -> ClosedLoop:
        return ClosedLoop(self.gains, self.setpoints, self.plant, self.omega_g)

    def gamma_basis(self) -> tuple[np.ndarray, np.ndarray]:
        """``k_i`` and the unit vector ``n`` orthogonal to it."""
        k_i = self.gains.k_i
        n = J @ k_i / float(np.linalg.norm(k_i))
        return k_i, n

    def reduced(self) -> np.ndarray:
        """``A`` with gamma re-coordinated as ``(sigma_omega, gamma_perp)``."""
        k_i, n = self.gamma_basis()
        T = np.eye(7)
        T[5, 5:7] = k_i
        T[6, 5:7] = n
        return T @ self.A @ np.linalg.inv(T)

    def spectrum(self) -> Spectrum:
        """Eigenvalues of the 6-state loop plus the structural zero."""
        inner = eig_small(self.reduced()[0:6, 0:6]).values
        values = np.concatenate((inner, [0.0]))
        structural = np.zeros(7, dtype=bool)
        structural[-1] = True
        return Spectrum(values, structural)

    def jacobian_deviation(self) -> float:
        """Max elementwise gap to the numeric Jacobian, relative to ``max(1, ||A||_inf)``."""
        A_num = numeric_jacobian(self.loop().field, self.equilibrium.x)
        scale = max(1.0, float(np.linalg.norm(self.A, ord=np.inf)))
        return float(np.max(np.abs(self.A - A_num)) / scale)


def closed_loop_matrix(
    gains: ControllerGains, sp: Setpoints, plant: PlantParams, omega_g: float | None = None
) -> ClosedLoopModel:
    eq = find_equilibrium(gains, sp, plant, omega_g)
    loop = ClosedLoop(gains, sp, plant, eq.omega_g)
    return ClosedLoopModel(A=loop.jacobian(eq.x), equilibrium=eq, gains=gains, setpoints=sp, plant=plant)


def error_coordinates(model: ClosedLoopModel) -> np.ndarray:
    """
    ``A`` in coordinates ``[psi_err, delta, sigma_omega, psi, gamma_perp]``
    where ``psi`` is the true virtual flux and ``psi_err = psi - psi_hat``.
    """
    eq = model.equilibrium
    L = model.plant.L_sec
    dpsi_g = -eq.u_g / eq.omega_g  # d(psi_g)/d(delta)
    k_i, n = model.gamma_basis()

    T = np.zeros((7, 7))
    T[0:2, 0:2] = L * np.eye(2)
    T[0:2, 2] = dpsi_g
    T[0:2, 3:5] = -np.eye(2)
    T[2, 2] = 1.0
    T[3, 5:7] = k_i
    T[4:6, 0:2] = L * np.eye(2)
    T[4:6, 2] = dpsi_g
    T[6, 5:7] = n
    return T @ model.A @ np.linalg.inv(T)


def linear_response(model: ClosedLoopModel, dx0: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """Free response ``expm(A t) dx0``; one row per time."""
    dx0 = np.asarray(dx0, dtype=float)
    return np.array([expm(model.A * t) @ dx0 for t in times])


def dominant_pole(spectrum: Spectrum) -> complex:
    """Slowest non-structural eigenvalue."""
    values = spectrum.non_structural
    if len(values) == 0:
        raise ValueError("spectrum has no non-structural eigenvalues")
    return complex(values[0])


def is_stable(spectrum: Spectrum) -> bool:
    return dominant_pole(spectrum).real < 0


# =============================================================================
# Pole sweep
# =============================================================================

@dataclass(frozen=True, eq=False)
class SweepSample:
    L_pu: float
    spectrum: Spectrum | None
    error: str | None = None

    @property
    def stable(self) -> bool:
        return self.spectrum is not None and is_stable(self.spectrum)


@dataclass(frozen=True, eq=False)
class PoleSweepResult:
    samples: tuple[SweepSample, ...]

    @property
    def L_values(self) -> list[float]:
        return [s.L_pu for s in self.samples]

    @property
    def unstable_L(self) -> list[float]:
        return [s.L_pu for s in self.samples if not s.stable]

    @property
    def all_stable(self) -> bool:
        return not self.unstable_L

    def header(self) -> list[str]:
        cols = ["L_pu"]
        for k in range(1, len(STATE_LABELS) + 1):
            cols += [f"re_{k}", f"im_{k}"]
        return cols

    def rows(self, float_format: str = "repr") -> list[list[str]]:
        rows = []
        for sample in self.samples:
            row = [format_float(sample.L_pu, float_format)]
            if sample.spectrum is None:
                row += ["nan"] * (2 * len(STATE_LABELS))
            else:
                for value in sample.spectrum.values:
                    row += [format_float(value.real, float_format), format_float(value.imag, float_format)]
            rows.append(row)
        return rows

    def write_csv(self, path: str | Path, float_format: str = "repr") -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows(float_format))
        return path


def sweep_workers() -> int:
    """Worker count for sweeps, capped by ``FLUXGFM_THREADS``."""
    workers = os.cpu_count() or 1
    cap = os.environ.get("FLUXGFM_THREADS")
    if cap:
        try:
            workers = min(workers, max(1, int(cap)))
        except ValueError:
            logger.warning("ignoring FLUXGFM_THREADS=%r (not an integer)", cap)
    return workers


def _sweep_sample(
    gains: ControllerGains, sp: Setpoints, plant: PlantParams, L: float, omega_g: float | None
) -> SweepSample:
    try:
        model = closed_loop_matrix(gains, sp, _with_L(plant, L), omega_g)
        return SweepSample(L_pu=L, spectrum=model.spectrum())
    except FluxGFMError as exc:
        logger.warning("sweep sample L = %.4g pu failed: %s", L, exc.message)
        return SweepSample(L_pu=L, spectrum=None, error=exc.message)


def _with_L(plant: PlantParams, L: float) -> PlantParams:
    return replace(plant, L_pu=float(L))


def pole_sweep(
    gains: ControllerGains,
    sp: Setpoints,
    plant: PlantParams,
    L_values: Sequence[float],
    omega_g: float | None = None,
    max_workers: int | None = None,
) -> PoleSweepResult:
    """Spectra over actual inductances ``L_values`` with the gains held fixed."""
    L_values = [float(L) for L in L_values]
    if not L_values:
        raise InvalidSpec("pole sweep needs at least one inductance")
    if any(L <= 0 for L in L_values):
        raise InvalidSpec("pole sweep inductances must be positive")
    if any(b <= a for a, b in zip(L_values, L_values[1:])):
        raise InvalidSpec("pole sweep inductances must be strictly increasing")

    workers = max_workers or sweep_workers()
    logger.info("pole sweep: %d samples, %d workers", len(L_values), workers)
    if workers == 1:
        samples = [_sweep_sample(gains, sp, plant, L, omega_g) for L in L_values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = list(pool.map(lambda L: _sweep_sample(gains, sp, plant, L, omega_g), L_values))
    return PoleSweepResult(samples=tuple(samples))
