"""Float formatting shared by the CSV writers."""

from __future__ import annotations

import math

FLOAT_FORMATS = ("repr", "hex")


def format_float(value: float, style: str = "repr") -> str:
    """Exact round-trip text: shortest decimal (``repr``) or ``float.hex``."""
    value = float(value)
    if style == "repr":
        return repr(value)
    if style == "hex":
        return value.hex() if math.isfinite(value) else repr(value)
    raise ValueError(f"unknown float format '{style}' (expected one of {FLOAT_FORMATS})")


def parse_float(text: str) -> float:
    text = text.strip()
    if "0x" in text.lower():
        return float.fromhex(text)
    return float(text)
