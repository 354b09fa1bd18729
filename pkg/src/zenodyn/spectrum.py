"""Energy distribution of the escaped electron.

P(E) follows from the time-integrated rate equations: integrating each
equation over 0 <= t < inf turns it into an algebraic relation for
sbar = int sigma dt, with sigma_00(0) = 1 as the only source.  The
alpha-independent block is a real 4x4 system; each reservoir energy then
needs one complex 2x2 solve.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.signal import find_peaks

from . import analytic
from .generator import UnsupportedVariantError
from .model import NO_DETECTOR, ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, lorentzian_dos


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class SigmaBarBlock:
    sbar00: float
    sbar11: float
    sbar01: complex


@dataclass
class Spectrum:
    energies: np.ndarray
    density: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if np.any(np.diff(self.energies) <= 0):
            raise SpectrumError("energies must be strictly ascending")
        if not np.all(np.isfinite(self.density)):
            raise SpectrumError("spectrum contains non-finite values")
        if self.density.size and self.density.min() < -1e-12 * max(1.0, np.abs(self.density).max()):
            raise SpectrumError("spectrum has negative density")

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.metadata.items():
            buf.write(f"# {k}={v}\n")
        buf.write("E_alpha,P\n")
        for e, p in zip(self.energies, self.density):
            buf.write(f"{e:.17g},{p:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


def _damping(spec: LorentzianDosSpec, det: DetectorSpec):
    if spec.GammaBar != 0.0 and det.GammaD != 0.0:
        raise UnsupportedVariantError("monitoring with a background width (GammaBar != 0) is not modelled")
    # (sigma_01 damping, sigma_0a damping) as full rates
    return spec.GammaBar + spec.Gamma1 + det.GammaD, spec.GammaBar + det.GammaD


def time_integrated_block(spec: LorentzianDosSpec, det: DetectorSpec = NO_DETECTOR) -> SigmaBarBlock:
    """Solve for int_0^inf of sigma_00, sigma_11 and sigma_01.

    Unknowns are [sbar00, sbar11, Re sbar01, Im sbar01].
    """
    Om, G1 = spec.Omega, spec.Gamma1
    g01, _ = _damping(spec, det)
    eps = spec.eps10
    A = np.array(
        [
            [-spec.GammaBar, 0.0, 0.0, -2.0 * Om],
            [0.0, -G1, 0.0, 2.0 * Om],
            [0.0, 0.0, -g01 / 2.0, -eps],
            [Om, -Om, eps, -g01 / 2.0],
        ]
    )
    b = np.array([-1.0, 0.0, 0.0, 0.0])
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SpectrumError("time-integrated system is singular") from None
    return SigmaBarBlock(float(x[0]), float(x[1]), complex(x[2], x[3]))


def _real_form(c):
    """Real 2x2 blocks [[re, -im], [im, re]] for complex coefficients."""
    return np.stack([np.stack([c.real, -c.imag], -1), np.stack([c.imag, c.real], -1)], -2)


def _mode_integrals(spec, det, E, block):
    """Complex sbar_0a and sbar_1a for each energy in ``E``."""
    Om, G1 = spec.Omega, spec.Gamma1
    _, g0a = _damping(spec, det)
    E = np.atleast_1d(np.asarray(E, dtype=float))
    n = E.size
    m11 = -g0a / 2.0 + 1j * (E - spec.E0)
    m12 = np.full(n, -1j * Om)
    m21 = np.full(n, -1j * Om)
    m22 = -G1 / 2.0 + 1j * (E - spec.E1)
    M = np.zeros((n, 4, 4))
    M[:, 0:2, 0:2] = _real_form(m11)
    M[:, 0:2, 2:4] = _real_form(m12)
    M[:, 2:4, 0:2] = _real_form(m21)
    M[:, 2:4, 2:4] = _real_form(m22)
    r0 = -1j * Om * block.sbar00
    r1 = -1j * Om * np.conj(block.sbar01)
    rhs = np.tile([r0.real, r0.imag, r1.real, r1.imag], (n, 1))
    try:
        sol = np.linalg.solve(M, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise SpectrumError("reservoir-mode system is singular") from None
    return sol[:, 0] + 1j * sol[:, 1], sol[:, 2] + 1j * sol[:, 3]


def spectral_density(spec: LorentzianDosSpec, det: DetectorSpec = NO_DETECTOR, E_alpha=0.0):
    """P(E) = 2 Omega Im(sbar_0a) rho(E)."""
    block = time_integrated_block(spec, det)
    p, _ = _mode_integrals(spec, det, E_alpha, block)
    dens = 2.0 * spec.Omega * p.imag * lorentzian_dos(spec, np.atleast_1d(E_alpha))
    return dens if np.ndim(E_alpha) else float(dens[0])


def spectrum_scan(spec: LorentzianDosSpec, det: DetectorSpec, energies) -> Spectrum:
    energies = np.asarray(energies, dtype=float)
    if np.any(np.diff(energies) <= 0):
        raise SpectrumError("energies must be strictly ascending")
    dens = spectral_density(spec, det, energies)
    meta = {
        "variant": "measured_lorentzian" if det.GammaD else "unmeasured_lorentzian",
        "params": {**spec.params(), **det.params()},
        "integral": float(np.trapezoid(dens, energies)),
    }
    return Spectrum(energies, dens, meta)


def unmeasured_spectrum_closed(spec: LorentzianDosSpec, E_alpha):
    return analytic.unmeasured_spectrum(spec, E_alpha)


def constant_spectrum_closed(spec: ConstantWidthSpec, det: DetectorSpec, E_alpha):
    return analytic.constant_line(spec.Gamma0, det.GammaD, spec.E0, E_alpha)


def constant_spectrum_scan(spec: ConstantWidthSpec, det: DetectorSpec, energies) -> Spectrum:
    energies = np.asarray(energies, dtype=float)
    dens = np.asarray(constant_spectrum_closed(spec, det, energies), dtype=float)
    meta = {
        "variant": "measured_constant" if det.GammaD else "unmeasured_constant",
        "params": {**spec.params(), **det.params()},
        "integral": float(np.trapezoid(dens, energies)),
    }
    return Spectrum(energies, dens, meta)


def mass_window(spec: LorentzianDosSpec, det: DetectorSpec = NO_DETECTOR, mass: float = 0.9999):
    """Symmetric window about the line centre holding at least ``mass``.

    The excluded tails are integrated with adaptive quadrature; the window
    doubles until they fall below 1 - mass.
    """
    center = 0.5 * (spec.E0 + spec.E1)
    half = abs(spec.E1 - spec.E0) + spec.Gamma1 + det.GammaD + spec.GammaBar + spec.Omega
    f = lambda e: spectral_density(spec, det, e)
    for _ in range(60):
        tail = quad(f, center + half, math.inf, limit=200)[0] + quad(f, -math.inf, center - half, limit=200)[0]
        if tail < 1.0 - mass:
            return center - half, center + half
        half *= 2.0
    raise SpectrumError("could not bound the spectral tails")


@dataclass(frozen=True)
class Peak:
    energy: float
    height: float
    fwhm: float | None
    left: float | None
    right: float | None


def _crossing(e, d, i, j, half):
    # linear interpolation of the half-level crossing between samples i and j
    return e[i] + (half - d[i]) * (e[j] - e[i]) / (d[j] - d[i])


def _peak_width(e, d, k):
    half = d[k] / 2.0
    left = right = None
    i = k
    while i > 0:
        if d[i - 1] > d[i] and d[i] > half:
            break  # climbing into a neighbouring peak before reaching half height
        if d[i - 1] <= half:
            left = _crossing(e, d, i - 1, i, half)
            break
        i -= 1
    i = k
    while i < len(d) - 1:
        if d[i + 1] > d[i] and d[i] > half:
            break
        if d[i + 1] <= half:
            right = _crossing(e, d, i, i + 1, half)
            break
        i += 1
    return left, right


def find_peaks_list(spec: Spectrum, rel_prominence: float = 1e-3) -> list[Peak]:
    """Local maxima with prominence above ``rel_prominence`` of the global max,
    sorted by decreasing height."""
    d, e = spec.density, spec.energies
    top = d.max()
    idx, _ = find_peaks(np.concatenate([[-np.inf], d, [-np.inf]]), prominence=rel_prominence * top)
    idx = idx - 1
    peaks = []
    for k in idx:
        left, right = _peak_width(e, d, k)
        width = right - left if left is not None and right is not None else None
        peaks.append(Peak(float(e[k]), float(d[k]), width, left, right))
    peaks.sort(key=lambda p: -p.height)
    return peaks


def fwhm(spec: Spectrum) -> float:
    """Full width at half maximum of the dominant peak."""
    d, e = spec.density, spec.energies
    k = int(np.argmax(d))
    if k == 0 or k == len(d) - 1:
        raise SpectrumError("window too narrow")
    half = d[k] / 2.0
    left_side = np.flatnonzero(d[:k] <= half)
    right_side = np.flatnonzero(d[k:] <= half)
    if left_side.size == 0 or right_side.size == 0:
        raise SpectrumError("window too narrow")
    i = left_side[-1]
    j = k + right_side[0]
    return float(_crossing(e, d, j - 1, j, half) - _crossing(e, d, i, i + 1, half))
