"""Parameter types for the monitored-decay models.

Units: hbar = 1 and energies are measured in units of the reference
coupling Omega, so times are in units of 1/Omega.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ValidationError(ValueError):
    """Raised when a parameter violates its invariant.

    ``field`` names the offending parameter.
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(message)
        self.field = field_name


def _finite(name: str, value) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"{name} must be a real number") from None
    if not math.isfinite(value):
        raise ValidationError(name, f"{name} must be finite")
    return value


def _nonneg(name: str, value) -> float:
    value = _finite(name, value)
    if value < 0:
        raise ValidationError(name, f"{name} must be non-negative")
    return value


def _positive(name: str, value) -> float:
    value = _finite(name, value)
    if value <= 0:
        raise ValidationError(name, f"{name} must be positive")
    return value


@dataclass(frozen=True)
class ConstantWidthSpec:
    """Level E0 decaying into a flat (wide-band) reservoir with width Gamma0."""

    E0: float
    Gamma0: float

    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "E0", _finite("E0", self.E0))
        object.__setattr__(self, "Gamma0", _nonneg("Gamma0", self.Gamma0))

    def params(self) -> dict:
        return {"kind": self.kind, "E0": self.E0, "Gamma0": self.Gamma0}


@dataclass(frozen=True)
class LorentzianDosSpec:
    """Level E0 coupled with strength Omega to a reservoir whose density of
    states is a flat background rhoBar plus a unit-area Lorentzian of width
    Gamma1 centred at E1.

    Give either ``rhoBar`` or ``GammaBar``; the other one is derived from
    GammaBar = 2*pi*Omega**2*rhoBar.  Passing both requires them to agree.
    """

    E0: float
    E1: float
    Omega: float
    Gamma1: float
    GammaBar: float | None = None
    rhoBar: float | None = None

    kind = "lorentzian"

    def __post_init__(self):
        s = object.__setattr__
        s(self, "E0", _finite("E0", self.E0))
        s(self, "E1", _finite("E1", self.E1))
        s(self, "Omega", _positive("Omega", self.Omega))
        s(self, "Gamma1", _positive("Gamma1", self.Gamma1))
        scale = 2.0 * math.pi * self.Omega**2
        if self.GammaBar is None and self.rhoBar is None:
            s(self, "GammaBar", 0.0)
            s(self, "rhoBar", 0.0)
        elif self.rhoBar is None:
            s(self, "GammaBar", _nonneg("GammaBar", self.GammaBar))
            s(self, "rhoBar", self.GammaBar / scale)
        elif self.GammaBar is None:
            s(self, "rhoBar", _nonneg("rhoBar", self.rhoBar))
            s(self, "GammaBar", scale * self.rhoBar)
        else:
            gb = _nonneg("GammaBar", self.GammaBar)
            rb = _nonneg("rhoBar", self.rhoBar)
            if not math.isclose(gb, scale * rb, rel_tol=1e-12, abs_tol=1e-300):
                raise ValidationError(
                    "GammaBar", "GammaBar must equal 2*pi*Omega**2*rhoBar"
                )
            s(self, "GammaBar", gb)
            s(self, "rhoBar", rb)

    @property
    def eps01(self) -> float:
        return self.E0 - self.E1

    @property
    def eps10(self) -> float:
        return self.E1 - self.E0

    def params(self) -> dict:
        return {
            "kind": self.kind,
            "E0": self.E0,
            "E1": self.E1,
            "Omega": self.Omega,
            "Gamma1": self.Gamma1,
            "GammaBar": self.GammaBar,
            "rhoBar": self.rhoBar,
        }


@dataclass(frozen=True)
class DetectorSpec:
    """Point-contact detector: transfer rate D with the dot empty, Dprime with
    the dot occupied."""

    D: float = 0.0
    Dprime: float = 0.0
    GammaD: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "D", _nonneg("D", self.D))
        object.__setattr__(self, "Dprime", _nonneg("Dprime", self.Dprime))
        object.__setattr__(self, "GammaD", decoherence_rate(self.D, self.Dprime))

    @classmethod
    def from_gamma_d(cls, gamma_d: float, Dprime: float = 0.0) -> "DetectorSpec":
        """Detector with the given decoherence rate and occupied-dot rate."""
        gamma_d = _nonneg("GammaD", gamma_d)
        Dprime = _nonneg("Dprime", Dprime)
        return cls(D=(math.sqrt(gamma_d) + math.sqrt(Dprime)) ** 2, Dprime=Dprime)

    def params(self) -> dict:
        return {"D": self.D, "Dprime": self.Dprime, "GammaD": self.GammaD}



@dataclass(frozen=True)
class ReservoirGrid:
    """Uniform midpoint discretization of the reservoir energies."""

    e_min: float
    e_max: float
    n_modes: int

    def __post_init__(self):
        object.__setattr__(self, "e_min", _finite("e_min", self.e_min))
        object.__setattr__(self, "e_max", _finite("e_max", self.e_max))
        if isinstance(self.n_modes, bool) or int(self.n_modes) != self.n_modes:
            raise ValidationError("n_modes", "n_modes must be an integer")
        object.__setattr__(self, "n_modes", int(self.n_modes))
        if self.n_modes < 2:
            raise ValidationError("n_modes", "n_modes must be at least 2")
        if not self.e_min < self.e_max:
            raise ValidationError("e_max", "e_min must be smaller than e_max")

    @classmethod
    def centered(cls, center: float, width: float, n_modes: int) -> "ReservoirGrid":
        return cls(center - width / 2.0, center + width / 2.0, n_modes)

    @property
    def delta(self) -> float:
        return (self.e_max - self.e_min) / self.n_modes

    @property
    def energies(self) -> np.ndarray:
        return self.e_min + (np.arange(self.n_modes) + 0.5) * self.delta

    @property
    def recurrence_time(self) -> float:
        return 2.0 * math.pi / self.delta

    def params(self) -> dict:
        return {"e_min": self.e_min, "e_max": self.e_max, "n_modes": self.n_modes}


def decoherence_rate(D: float, Dprime: float) -> float:
    """Return (sqrt(D) - sqrt(Dprime))**2."""
    D = _nonneg("D", D)
    Dprime = _nonneg("Dprime", Dprime)
    return (math.sqrt(D) - math.sqrt(Dprime)) ** 2


NO_DETECTOR = DetectorSpec(0.0, 0.0)


def lorentzian_dos(spec: LorentzianDosSpec, E):
    """Reservoir density of states: background plus unit-area Lorentzian."""
    E = np.asarray(E, dtype=float)
    half = spec.Gamma1 / 2.0
    rho = spec.rhoBar + (spec.Gamma1 / (2.0 * math.pi)) / ((E - spec.E1) ** 2 + half**2)
    return rho if rho.ndim else float(rho)


def validate(spec):
    """Re-check every invariant of a parameter object and return it.

    Construction already validates; this is the explicit entry point used by
    config loading, and it rejects objects of unknown type.
    """
    if isinstance(spec, (ConstantWidthSpec, LorentzianDosSpec, DetectorSpec, ReservoirGrid)):
        cls = type(spec)
        if isinstance(spec, DetectorSpec):
            return cls(spec.D, spec.Dprime)
        if isinstance(spec, LorentzianDosSpec):
            return cls(spec.E0, spec.E1, spec.Omega, spec.Gamma1, rhoBar=spec.rhoBar)
        if isinstance(spec, ConstantWidthSpec):
            return cls(spec.E0, spec.Gamma0)
        return cls(spec.e_min, spec.e_max, spec.n_modes)
    raise ValidationError("spec", f"cannot validate object of type {type(spec).__name__}")


def spec_from_dict(d: dict):
    """Build a system spec from the ``model`` section of a JSON config."""
    if not isinstance(d, dict):
        raise ValidationError("model", "model must be an object")
    kind = d.get("kind")
    fields_ = {k: v for k, v in d.items() if k != "kind"}
    try:
        if kind == "constant":
            return ConstantWidthSpec(**fields_)
        if kind == "lorentzian":
            return LorentzianDosSpec(**fields_)
    except TypeError as exc:
        raise ValidationError("model", f"bad model fields: {exc}") from None
    raise ValidationError("kind", "model.kind must be 'constant' or 'lorentzian'")
