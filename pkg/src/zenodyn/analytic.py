"""Closed-form results for the decay models.

These are reference expressions used to check the numerical modules; all
functions accept numpy arrays for the time / energy argument.
"""
from __future__ import annotations

import math

import numpy as np

from .model import LorentzianDosSpec, lorentzian_dos

# |omega*t/4| below this switches sinh(x)/omega to its Taylor series
_SERIES_SWITCH = 1e-2


def _scalar_or_array(x):
    x = np.asarray(x)
    return x if x.ndim else x.item()


def survival_constant(Gamma0, t):
    """exp(-Gamma0 t)."""
    return _scalar_or_array(np.exp(-Gamma0 * np.asarray(t, dtype=float)))


def mode_occupation_constant(Gamma0, E0, E_alpha, Omega_alpha, t):
    """Occupation of reservoir mode E_alpha for the flat-band decay."""
    t = np.asarray(t, dtype=float)
    d = np.asarray(E_alpha, dtype=float) - E0
    bracket = 1.0 - 2.0 * np.cos(d * t) * np.exp(-Gamma0 * t / 2.0) + np.exp(-Gamma0 * t)
    return _scalar_or_array(Omega_alpha**2 / (d**2 + (Gamma0 / 2.0) ** 2) * bracket)


def two_level_discriminant(Omega, eps01, Gamma1) -> complex:
    """omega = sqrt((Gamma1 + 2i eps01)^2 - 16 Omega^2), principal branch."""
    return complex(np.sqrt(complex(Gamma1, 2.0 * eps01) ** 2 - 16.0 * Omega**2))


def survival_two_level(Omega, eps01, Gamma1, t, omega=None):
    """Survival on E0 when it is coupled only to a resonance of width Gamma1.

    Uses the amplitude
        exp(-Gamma1 t/4) * [cosh(omega t/4) + a sinh(omega t/4)/omega],
    a = Gamma1 + 2i eps01, which is even in omega; a different square-root
    branch may be passed through ``omega``.  Near the critical point omega -> 0
    the sinh ratio is evaluated by its series.
    """
    t = np.asarray(t, dtype=float)
    if omega is None:
        omega = two_level_discriminant(Omega, eps01, Gamma1)
    a = complex(Gamma1, 2.0 * eps01)
    x = omega * t / 4.0
    damp = np.exp(-Gamma1 * t / 4.0)
    grow = np.exp((omega - Gamma1) * t / 4.0)
    shrink = np.exp(-(omega + Gamma1) * t / 4.0)
    cosh_part = 0.5 * (grow + shrink)
    small = np.abs(x) < _SERIES_SWITCH
    with np.errstate(invalid="ignore", divide="ignore"):
        sinh_over = np.where(
            small,
            damp * (t / 4.0) * (1.0 + x**2 / 6.0 + x**4 / 120.0 + x**6 / 5040.0),
            (grow - shrink) / (2.0 * omega) if omega != 0 else 0.0,
        )
    amp = cosh_part + a * sinh_over
    return _scalar_or_array(np.abs(amp) ** 2)


def survival_exponential_limit(Omega, Gamma1, t):
    """exp(-4 Omega^2 t / Gamma1), the long-time form for Gamma1 >> Omega."""
    return _scalar_or_array(np.exp(-4.0 * Omega**2 * np.asarray(t, dtype=float) / Gamma1))


def decay_time_closed(spec: LorentzianDosSpec) -> float:
    """Mean dwell time on E0 for the unmeasured Lorentzian model."""
    G = spec.GammaBar + spec.Gamma1
    tau = 1.0 / spec.Gamma1 + (4.0 * spec.eps10**2 + G**2) / (4.0 * spec.Omega**2 * G)
    return tau / (1.0 + tau * spec.GammaBar)


def decay_time_unmeasured(Omega, eps10, Gamma1, GammaBar=0.0):
    """decay_time_closed from bare numbers, with E0 = 0 and E1 = eps10."""
    return decay_time_closed(LorentzianDosSpec(0.0, eps10, Omega, Gamma1, GammaBar=GammaBar))


def measured_exponent(Omega, eps01, Gamma1, GammaD):
    """Asymptotic decay rate of E0 under monitoring (valid for Gamma1 >> Omega)."""
    G = Gamma1 + GammaD
    return 4.0 * G * Omega**2 / (4.0 * eps01**2 + G**2)


def measured_exponent_meta(Omega, eps01, Gamma1, GammaD) -> dict:
    return {
        "rate": measured_exponent(Omega, eps01, Gamma1, GammaD),
        "asymptotic": True,
        "outside_validity": bool(Gamma1 < 5.0 * Omega),
    }


def measured_decay_time(Omega, eps01, Gamma1, GammaD):
    G = Gamma1 + GammaD
    return 1.0 / Gamma1 + (4.0 * eps01**2 + G**2) / (4.0 * Omega**2 * G)


def measured_spectrum_aligned(Omega, Gamma1, GammaD, eps_a0):
    """Energy distribution of the escaped electron for E1 = E0, monitored."""
    e = np.asarray(eps_a0, dtype=float)
    k = Gamma1 * GammaD + 4.0 * Omega**2
    num = 2.0 * (Gamma1 + GammaD) * k / math.pi
    den = 16.0 * e**4 + 4.0 * e**2 * (Gamma1**2 + GammaD**2 - 8.0 * Omega**2) + k**2
    return _scalar_or_array(num / den)


def occ_limit_lorentzian(Omega, Gamma1, E0, E_alpha):
    """Lorentzian line of width 4 Omega^2/Gamma1 centred at E0."""
    w = 2.0 * Omega**2 / Gamma1
    d = np.asarray(E_alpha, dtype=float) - E0
    return _scalar_or_array((2.0 * w / (2.0 * math.pi)) / (d**2 + w**2))


def constant_line(Gamma0, GammaD, E0, E_alpha):
    """Lorentzian of width Gamma0 + GammaD centred at E0."""
    G = Gamma0 + GammaD
    d = np.asarray(E_alpha, dtype=float) - E0
    return _scalar_or_array((G / (2.0 * math.pi)) / (d**2 + G**2 / 4.0))


measured_line_constant = constant_line


def unmeasured_spectrum(spec: LorentzianDosSpec, E_alpha):
    """sigma_aa(inf) * rho(E_alpha) for the unmeasured Lorentzian model."""
    E = np.asarray(E_alpha, dtype=float)
    ea0 = E - spec.E0
    ea1 = E - spec.E1
    num = spec.Omega**2 * (ea1**2 + spec.Gamma1**2 / 4.0)
    den = np.abs((ea0 + 0.5j * spec.GammaBar) * (ea1 + 0.5j * spec.Gamma1) - spec.Omega**2) ** 2
    return _scalar_or_array(num / den * lorentzian_dos(spec, E))


REGISTRY = {
    "survival_constant": (survival_constant, ("Gamma0", "t")),
    "mode_occupation_constant": (
        mode_occupation_constant,
        ("Gamma0", "E0", "E_alpha", "Omega_alpha", "t"),
    ),
    "survival_two_level": (survival_two_level, ("Omega", "eps01", "Gamma1", "t")),
    "survival_exponential_limit": (survival_exponential_limit, ("Omega", "Gamma1", "t")),
    "decay_time_closed": (decay_time_unmeasured, ("Omega", "eps10", "Gamma1", "GammaBar")),
    "measured_exponent": (measured_exponent, ("Omega", "eps01", "Gamma1", "GammaD")),
    "measured_decay_time": (measured_decay_time, ("Omega", "eps01", "Gamma1", "GammaD")),
    "measured_spectrum_aligned": (
        measured_spectrum_aligned,
        ("Omega", "Gamma1", "GammaD", "eps_a0"),
    ),
    "occ_limit_lorentzian": (occ_limit_lorentzian, ("Omega", "Gamma1", "E0", "E_alpha")),
    "constant_line": (constant_line, ("Gamma0", "GammaD", "E0", "E_alpha")),
    "measured_line_constant": (constant_line, ("Gamma0", "GammaD", "E0", "E_alpha")),
}
