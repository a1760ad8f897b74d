"""
Dense 2-D algebra and integration kernel.

Vectors are ``numpy`` arrays of shape ``(2,)``, matrices ``(2, 2)``.
Everything here is a pure function and safe to call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import NoConvergence, NonConjugatePair, NonFiniteState, ZeroDirection

# Counter-clockwise rotation generator: rot(theta) = expm(theta * J).
J = np.array([[0.0, -1.0], [1.0, 0.0]])
J.setflags(write=False)

MAX_EIG_DIMENSION = 16


def rot(theta: float) -> np.ndarray:
    """Rotation matrix ``[[cos, -sin], [sin, cos]]``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped == -math.pi:
        return math.pi
    return wrapped


# =============================================================================
# Pole placement
# =============================================================================

def as_pole_pair(sigma: Sequence[complex], rel_tol: float = 1e-9) -> tuple[complex, complex]:
    """Validate that two poles are a real pair or a complex-conjugate pair."""
    if len(sigma) != 2:
        raise NonConjugatePair(f"expected two poles, got {len(sigma)}")
    s1, s2 = complex(sigma[0]), complex(sigma[1])
    scale = max(1.0, abs(s1), abs(s2))
    both_real = abs(s1.imag) <= rel_tol * scale and abs(s2.imag) <= rel_tol * scale
    conjugate = abs(s1 - s2.conjugate()) <= rel_tol * scale
    if not (both_real or conjugate):
        raise NonConjugatePair(
            f"poles {s1} and {s2} are not closed under conjugation",
            notes=["give a real pair or a pair a+bj, a-bj"],
        )
    if both_real:
        return complex(s1.real, 0.0), complex(s2.real, 0.0)
    return s1, s1.conjugate()


def place_rank_one(v: np.ndarray, omega0: float, sigma: Sequence[complex]) -> np.ndarray:
    """
    Column gain ``k`` with ``eig(-omega0*J - k v^T) = sigma``.

    Trace and determinant of the closed-loop matrix are matched; with the
    matrix determinant lemma both conditions are linear in ``k``:

        v^T k   = -(s1 + s2)
        v^T J k = (omega0**2 - s1*s2) / omega0
    """
    v = np.asarray(v, dtype=float)
    if float(np.hypot(v[0], v[1])) < 1e-12:
        raise ZeroDirection("placement direction is zero; the gain is undetermined")
    s1, s2 = as_pole_pair(sigma)
    trace = (s1 + s2).real
    det = (s1 * s2).real
    M = np.array([[v[0], v[1]], [v[1], -v[0]]])
    rhs = np.array([-trace, (omega0 * omega0 - det) / omega0])
    return np.linalg.solve(M, rhs)


# =============================================================================
# Eigenvalues
# =============================================================================

@dataclass(frozen=True, eq=False)
class Spectrum:
    """
    Eigenvalues sorted by descending real part, ties by descending |imag|
    (positive imaginary part first).

    ``structural`` flags eigenvalues that are structural (e.g. an
    unobservable integrator direction) and must be ignored by stability
    verdicts.
    """
    values: np.ndarray
    structural: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=complex)
        structural = self.structural
        if structural is None:
            structural = np.zeros(values.shape, dtype=bool)
        structural = np.asarray(structural, dtype=bool)
        order = sort_order(values)
        object.__setattr__(self, "values", values[order])
        object.__setattr__(self, "structural", structural[order])

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[complex]:
        return iter(complex(v) for v in self.values)

    def __getitem__(self, idx: int) -> complex:
        return complex(self.values[idx])

    @property
    def non_structural(self) -> np.ndarray:
        return self.values[~self.structural]

    def __str__(self) -> str:
        parts = []
        for value, flag in zip(self.values, self.structural):
            text = f"{value.real:+.6g}{value.imag:+.6g}j"
            parts.append(text + (" (structural)" if flag else ""))
        return "[" + ", ".join(parts) + "]"


def sort_order(values: np.ndarray) -> np.ndarray:
    """Indices ordering eigenvalues by the public Spectrum contract."""
    values = np.asarray(values, dtype=complex)
    # lexsort keys run from least to most significant
    return np.lexsort((-values.imag, -np.abs(values.imag), -values.real))


def _enforce_conjugate_symmetry(w: np.ndarray, tol: float) -> np.ndarray:
    w = w.astype(complex)
    small = np.abs(w.imag) <= tol
    w[small] = w[small].real
    upper = list(np.flatnonzero(w.imag > 0))
    lower = list(np.flatnonzero(w.imag < 0))
    if len(upper) != len(lower):
        raise NoConvergence("complex eigenvalues of a real matrix are not paired")
    for k in upper:
        j = min(lower, key=lambda m: abs(w[m] - np.conj(w[k])))
        lower.remove(j)
        mean = 0.5 * (w[k] + np.conj(w[j]))
        w[k], w[j] = mean, np.conj(mean)
    return w


def eig_small(A: np.ndarray) -> Spectrum:
    """All eigenvalues of a small dense matrix (LAPACK Hessenberg + shifted QR)."""
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"eig_small expects a square matrix, got shape {A.shape}")
    if A.shape[0] > MAX_EIG_DIMENSION:
        raise ValueError(f"eig_small supports n <= {MAX_EIG_DIMENSION}, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteState("matrix has non-finite entries")
    try:
        w = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigenvalue iteration failed: {exc}") from exc
    if np.isrealobj(A):
        scale = max(1.0, float(np.linalg.norm(A, ord=np.inf)))
        w = _enforce_conjugate_symmetry(w, 1e-13 * scale)
    return Spectrum(w)


# =============================================================================
# Integration
# =============================================================================

VectorField = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(f: VectorField, x: np.ndarray, t: float, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = f(t, x)
    _check_finite(k1, t)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    _check_finite(k2, t)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    _check_finite(k3, t)
    k4 = f(t + h, x + h * k3)
    _check_finite(k4, t)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(k: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(k)):
        raise NonFiniteState("integrator stage produced a non-finite value", time=t)
