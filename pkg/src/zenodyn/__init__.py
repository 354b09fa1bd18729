"""Decay of a quantum-dot level into a reservoir under continuous monitoring
by a point-contact detector: rate equations, spectra, closed forms and an
amplitude-level oracle."""

from .model import (
    NO_DETECTOR,
    ConstantWidthSpec,
    DetectorSpec,
    LorentzianDosSpec,
    ReservoirGrid,
    ValidationError,
    decoherence_rate,
    lorentzian_dos,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "NO_DETECTOR",
    "ConstantWidthSpec",
    "DetectorSpec",
    "LorentzianDosSpec",
    "ReservoirGrid",
    "ValidationError",
    "decoherence_rate",
    "lorentzian_dos",
    "validate",
]
