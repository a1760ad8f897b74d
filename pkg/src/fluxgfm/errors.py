"""
fluxgfm Error Types and Formatting

Provides compiler-style error messages with:
- Unique error codes grouped by module
- A stable mapping from error code to CLI exit code
- Optional notes and "did you mean" suggestions
- Color-coded output (when supported)
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import TextIO


# =============================================================================
# Color Support
# =============================================================================

def supports_color(stream: TextIO | None = None) -> bool:
    """Check if ``stream`` (default: stderr) is a terminal that takes color output."""
    if os.environ.get("NO_COLOR"):
        return False
    if os.environ.get("FORCE_COLOR"):
        return True
    stream = sys.stderr if stream is None else stream
    return hasattr(stream, "isatty") and stream.isatty()


class Color:
    """
    ANSI color codes for one output stream.

    ``Color()`` writes to whatever ``sys.stderr`` is at call time;
    ``Color(sys.stdout)`` colors report output.
    """

    RED = "\033[91m"
    GREEN = "\033[92m"
    BOLD = "\033[1m"
    RESET = "\033[0m"

    def __init__(self, stream: TextIO | None = None):
        self.stream = stream

    def enabled(self) -> bool:
        return supports_color(self.stream)

    def _wrap(self, code: str, text: str) -> str:
        if self.enabled():
            return f"{code}{text}{self.RESET}"
        return text

    def red(self, text: str) -> str:
        return self._wrap(self.RED, text)

    def green(self, text: str) -> str:
        return self._wrap(self.GREEN, text)

    def bold(self, text: str) -> str:
        return self._wrap(self.BOLD, text)


# =============================================================================
# Error Codes
# =============================================================================

class ErrorCode(Enum):
    """
    Unique error codes for all fluxgfm errors.

    Code ranges:
        E01xx - Numerics kernel
        E02xx - Plant model
        E03xx - Gain design
        E04xx - Small-signal analysis
        E05xx - Scenario simulation
        E06xx - Configuration
    """

    # E01xx - Numerics
    E0101 = "Zero placement direction"
    E0102 = "Poles not closed under conjugation"
    E0103 = "Eigenvalue iteration did not converge"
    E0104 = "Non-finite state"

    # E02xx - Plant
    E0201 = "Zero frequency"

    # E03xx - Tuning
    E0301 = "Infeasible setpoint"
    E0302 = "Singular grid flux"
    E0303 = "Invalid tuning specification"

    # E04xx - Small-signal
    E0401 = "No equilibrium"
    E0402 = "Unstable pole sweep"

    # E05xx - Scenarios
    E0501 = "Simulation diverged"
    E0502 = "No steady state"
    E0503 = "Invalid scenario"

    # E06xx - Configuration
    E0601 = "Unknown configuration key"
    E0602 = "Invalid configuration value"
    E0603 = "Configuration file not found"

    @property
    def code(self) -> str:
        """Get the error code string (e.g., 'E0301')."""
        return self.name

    @property
    def exit_code(self) -> int:
        """CLI exit code for this error (stable contract)."""
        return _EXIT_CODES.get(self, 1)


_EXIT_CODES = {
    ErrorCode.E0301: 2,
    ErrorCode.E0101: 3,
    ErrorCode.E0102: 3,
    ErrorCode.E0302: 3,
    ErrorCode.E0402: 4,
    ErrorCode.E0104: 5,
    ErrorCode.E0501: 5,
    ErrorCode.E0401: 6,
}


# =============================================================================
# Exception Classes
# =============================================================================

class FluxGFMError(Exception):
    """
    Base exception for all fluxgfm errors.

    Carries an ErrorCode so the CLI can map failures to exit codes.
    """

    default_code: ErrorCode = ErrorCode.E0303

    def __init__(
        self,
        message: str,
        code: ErrorCode | None = None,
        notes: list[str] | None = None,
    ):
        self.message = message
        self.code = code or self.default_code
        self.notes = list(notes or [])
        super().__init__(f"[{self.code.code}] {message}")

    @property
    def exit_code(self) -> int:
        return self.code.exit_code

    def format(self) -> str:
        """Format as a multi-line diagnostic for stderr."""
        color = Color()
        prefix = color.bold(color.red(f"error[{self.code.code}]"))
        lines = [f"{prefix}: {color.bold(self.message)}"]
        for note in self.notes:
            lines.append(f"   = {color.bold('note')}: {note}")
        return "\n".join(lines)


class ZeroDirection(FluxGFMError):
    """Raised when a rank-one placement direction vanishes."""
    default_code = ErrorCode.E0101


class NonConjugatePair(FluxGFMError):
    """Raised when requested poles do not form a real or conjugate pair."""
    default_code = ErrorCode.E0102


class NoConvergence(FluxGFMError):
    """Raised when the eigenvalue iteration fails."""
    default_code = ErrorCode.E0103


class NonFiniteState(FluxGFMError):
    """Raised when an integrator stage produces NaN or inf."""
    default_code = ErrorCode.E0104

    def __init__(self, message: str, time: float | None = None, **kwargs):
        self.time = time
        if time is not None:
            message = f"{message} at t = {time:.6g} s"
        super().__init__(message, **kwargs)


class ZeroFrequency(FluxGFMError):
    """Raised when the virtual flux map is evaluated at zero frequency."""
    default_code = ErrorCode.E0201


class InfeasibleSetpoint(FluxGFMError):
    """Raised when p* exceeds the static transfer limit."""
    default_code = ErrorCode.E0301


class SingularFlux(FluxGFMError):
    """Raised when the grid flux setpoint is (numerically) zero."""
    default_code = ErrorCode.E0302


class InvalidSpec(FluxGFMError):
    """Raised when a tuning specification violates its invariants."""
    default_code = ErrorCode.E0303


class NoEquilibrium(FluxGFMError):
    """Raised when neither Newton nor the simulation fallback converge."""
    default_code = ErrorCode.E0401


class UnstableSweep(FluxGFMError):
    """Raised when a pole sweep contains unstable samples."""
    default_code = ErrorCode.E0402

    def __init__(self, message: str, unstable_L: list[float] | None = None, **kwargs):
        self.unstable_L = list(unstable_L or [])
        super().__init__(message, **kwargs)


class SimulationDiverged(NonFiniteState):
    """Raised by the scenario runner when the trajectory blows up."""
    default_code = ErrorCode.E0501


class NoSteadyState(FluxGFMError):
    """Raised when the final window of a run has not settled."""
    default_code = ErrorCode.E0502


class InvalidScenario(FluxGFMError):
    """Raised for malformed scenario definitions."""
    default_code = ErrorCode.E0503


class ConfigError(FluxGFMError):
    """Raised for invalid configuration files or values."""
    default_code = ErrorCode.E0602


# =============================================================================
# Diagnostic Collection
# =============================================================================

@dataclass
class Check:
    """A named residual compared against a tolerance."""
    name: str
    residual: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return abs(self.residual) < self.tolerance

    def format(self, color: Color | None = None) -> str:
        color = Color() if color is None else color
        mark = color.green("ok") if self.passed else color.red("FAIL")
        return f"  {self.name:<34} {self.residual:12.3e}  [{mark}]"


@dataclass
class CheckCollection:
    """
    Collects residual checks so a report can list all of them
    instead of stopping at the first failure.
    """
    checks: list[Check] = field(default_factory=list)

    def add(self, name: str, residual: float, tolerance: float) -> None:
        self.checks.append(Check(name, float(residual), tolerance))

    @property
    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def all_passed(self) -> bool:
        return not self.failed

    def format_all(self, color: Color | None = None) -> str:
        return "\n".join(c.format(color) for c in self.checks)


# =============================================================================
# Helper Functions
# =============================================================================

def levenshtein_distance(s1: str, s2: str) -> int:
    """Calculate the Levenshtein edit distance between two strings."""
    if len(s1) < len(s2):
        return levenshtein_distance(s2, s1)

    if len(s2) == 0:
        return len(s1)

    previous_row = range(len(s2) + 1)
    for i, c1 in enumerate(s1):
        current_row = [i + 1]
        for j, c2 in enumerate(s2):
            insertions = previous_row[j + 1] + 1
            deletions = current_row[j] + 1
            substitutions = previous_row[j] + (c1 != c2)
            current_row.append(min(insertions, deletions, substitutions))
        previous_row = current_row

    return previous_row[-1]


def find_similar(name: str, candidates: list[str], max_distance: int = 3) -> list[str]:
    """Find candidates similar to the given name using Levenshtein distance."""
    similar = []
    for candidate in candidates:
        distance = levenshtein_distance(name.lower(), candidate.lower())
        if distance <= max_distance:
            similar.append((distance, candidate))

    similar.sort(key=lambda x: x[0])
    return [name for _, name in similar]
