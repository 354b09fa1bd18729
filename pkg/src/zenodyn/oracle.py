"""Brute-force amplitude evolution on a discretized continuum.

The Schrodinger equation i db/dt = H b is integrated directly for the dot
amplitude b0, the reservoir amplitudes b_alpha and, for the Lorentzian
model, an auxiliary amplitude b1.  No density-matrix reduction and no
wide-band limit enter, so these runs are an independent check of the rate
equations.

A Lorentzian density of states is realised by coupling the dot with
strength Omega to a discrete level E1, which in turn couples to a flat grid
with width Gamma1.  A flat background (GammaBar) uses a second, separate
flat grid coupled to the dot directly.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .dynamics import IntegratorConfig, NumericalError, TimeSeries
from .model import ConstantWidthSpec, LorentzianDosSpec, ReservoirGrid, ValidationError

_MIN_WINDOW = 40.0
_RECURRENCE_FRACTION = 0.5


class RecurrenceError(ValueError):
    pass


@dataclass
class AmplitudeSeries:
    """Amplitude snapshots.

    ``b_alpha`` has shape (time, mode) when every snapshot is kept and
    (1, mode) when only the final one is.  ``b_background`` holds the
    separate flat-background modes of the Lorentzian model, if any.
    """

    times: np.ndarray
    b0: np.ndarray
    b_alpha: np.ndarray
    energies: np.ndarray
    delta: float
    b1: np.ndarray | None = None
    b_background: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def survival(self) -> np.ndarray:
        return np.abs(self.b0) ** 2

    def norm(self) -> np.ndarray:
        """sum |b|^2 at each time; only defined when all modes were kept."""
        if self.b_alpha.shape[0] != self.times.size:
            raise ValueError("mode amplitudes were stored for the final time only")
        tot = np.abs(self.b0) ** 2 + (np.abs(self.b_alpha) ** 2).sum(axis=1)
        if self.b1 is not None:
            tot = tot + np.abs(self.b1) ** 2
        if self.b_background is not None:
            tot = tot + (np.abs(self.b_background) ** 2).sum(axis=1)
        return tot

    def final_profile(self) -> np.ndarray:
        """|b_alpha(t_final)|^2 / dE, the energy distribution of escaped weight."""
        return np.abs(self.b_alpha[-1]) ** 2 / self.delta

    def to_timeseries(self) -> TimeSeries:
        return TimeSeries(self.times, self.survival(), "sigma00", meta=dict(self.meta))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        buf.write("t,sigma00\n")
        for t, s in zip(self.times, self.survival()):
            buf.write(f"{t:.17g},{s:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


def _check_inputs(grid: ReservoirGrid, width: float, t_samples):
    window = grid.e_max - grid.e_min
    if window < _MIN_WINDOW * width:
        raise ValidationError("grid", f"grid window must be at least {_MIN_WINDOW:g} times the level width")
    t = np.asarray(t_samples, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValidationError("t_samples", "t_samples must be a non-empty ascending array starting at t >= 0")
    horizon = _RECURRENCE_FRACTION * grid.recurrence_time
    if t[-1] >= horizon:
        raise RecurrenceError(f"grid recurrence horizon exceeded: t={t[-1]:.6g} >= {horizon:.6g}")
    return t


def _propagate(H: sp.csr_matrix, psi0, t, cfg: IntegratorConfig):
    A = (-1j * H).tocsr()
    out = np.empty((t.size, psi0.size), dtype=complex)
    if cfg.method == "adaptive":
        if t[-1] == 0.0:
            out[:] = psi0
            return out
        sol = solve_ivp(lambda _t, y: A @ y, (0.0, t[-1]), psi0, method="DOP853",
                        t_eval=t, rtol=cfg.rtol, atol=cfg.atol, max_step=cfg.max_step)
        if sol.status != 0:
            raise NumericalError(f"amplitude integration failed: {sol.message}")
        return sol.y.T
    psi = psi0
    steps = np.diff(np.concatenate([[0.0], t]))
    if t.size > 2 and np.allclose(steps[1:], steps[1], rtol=1e-12, atol=0):
        if t[0] > 0:
            psi = spla.expm_multiply(A * t[0], psi)
        out[:] = spla.expm_multiply(A, psi, start=0.0, stop=t[-1] - t[0], num=t.size, endpoint=True)
        return out
    for k, dt in enumerate(steps):
        if dt > 0:
            psi = spla.expm_multiply(A * dt, psi)
        out[k] = psi
    return out


def _hamiltonian(diag, couplings):
    """Hermitian H from on-site energies and (i, j, value) couplings."""
    n = diag.size
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    vals = [diag.astype(complex)]
    for i, j, v in couplings:
        i, j, v = np.atleast_1d(i), np.atleast_1d(j), np.broadcast_to(np.asarray(v, dtype=complex), np.shape(np.atleast_1d(i)))
        rows += [i, j]
        cols += [j, i]
        vals += [v, np.conj(v)]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def evolve_amplitudes_constant(
    spec: ConstantWidthSpec,
    grid: ReservoirGrid,
    t_samples,
    cfg: IntegratorConfig | None = None,
    omega_of_alpha=None,
    keep_modes: bool = False,
) -> AmplitudeSeries:
    """i db0/dt = E0 b0 + sum_a W_a b_a;  i db_a/dt = E_a b_a + W_a b0.

    The default couplings W_a = sqrt(Gamma0 dE / 2 pi) give width Gamma0.
    """
    cfg = cfg or IntegratorConfig()
    t = _check_inputs(grid, spec.Gamma0, t_samples)
    E = grid.energies
    n = grid.n_modes
    if omega_of_alpha is None:
        w = np.full(n, math.sqrt(spec.Gamma0 * grid.delta / (2.0 * math.pi)))
    else:
        w = np.broadcast_to(np.asarray(omega_of_alpha, dtype=float), (n,))
    H = _hamiltonian(np.concatenate([[spec.E0], E]), [(np.zeros(n, dtype=int), np.arange(1, n + 1), w)])
    psi0 = np.zeros(n + 1, dtype=complex)
    psi0[0] = 1.0
    states = _propagate(H, psi0, t, cfg)
    _check_finite(states, t)
    modes = states[:, 1:] if keep_modes else states[-1:, 1:]
    meta = {"variant": "oracle_constant", "delta_E": grid.delta, "n_modes": n}
    return AmplitudeSeries(t, states[:, 0], modes, E, grid.delta, meta=meta)


def evolve_amplitudes_lorentzian(
    spec: LorentzianDosSpec,
    grid: ReservoirGrid,
    t_samples,
    cfg: IntegratorConfig | None = None,
    keep_modes: bool = False,
) -> AmplitudeSeries:
    """Dot b0 -- auxiliary level b1 (coupling Omega) -- flat grid (width Gamma1).

    With GammaBar > 0 the dot also couples to a second flat grid of the same
    energies with width GammaBar.
    """
    cfg = cfg or IntegratorConfig()
    t = _check_inputs(grid, max(spec.Gamma1, spec.GammaBar), t_samples)
    E = grid.energies
    n = grid.n_modes
    c1 = math.sqrt(spec.Gamma1 * grid.delta / (2.0 * math.pi))
    diag = [[spec.E0, spec.E1], E]
    couplings = [(0, 1, spec.Omega), (np.ones(n, dtype=int), np.arange(2, n + 2), c1)]
    background = spec.GammaBar > 0.0
    if background:
        cb = math.sqrt(spec.GammaBar * grid.delta / (2.0 * math.pi))
        diag.append(E)
        couplings.append((np.zeros(n, dtype=int), np.arange(n + 2, 2 * n + 2), cb))
    H = _hamiltonian(np.concatenate(diag), couplings)
    psi0 = np.zeros(H.shape[0], dtype=complex)
    psi0[0] = 1.0
    states = _propagate(H, psi0, t, cfg)
    _check_finite(states, t)
    sl = slice(None) if keep_modes else slice(-1, None)
    modes = states[sl, 2 : n + 2]
    bg = states[sl, n + 2 :] if background else None
    meta = {"variant": "oracle_lorentzian", "delta_E": grid.delta, "n_modes": n}
    return AmplitudeSeries(t, states[:, 0], modes, E, grid.delta, b1=states[:, 1], b_background=bg, meta=meta)


def _check_finite(states, t):
    if not np.all(np.isfinite(states)):
        bad = np.flatnonzero(~np.all(np.isfinite(states), axis=1))[0]
        raise NumericalError(f"non-finite amplitude at t={t[bad]:.6g}")


@dataclass(frozen=True)
class ComparisonReport:
    channel: str
    max_abs: float
    mean_abs: float
    max_rel: float
    mean_rel: float
    worst_t: float

    def within(self, tol: float) -> bool:
        return self.max_abs < tol

    def as_dict(self) -> dict:
        return {
            "channel": self.channel,
            "max_abs": self.max_abs,
            "mean_abs": self.mean_abs,
            "max_rel": self.max_rel,
            "mean_rel": self.mean_rel,
            "worst_t": self.worst_t,
        }


def _channel_values(series, channel: str):
    if isinstance(series, AmplitudeSeries):
        if channel == "sigma00":
            return series.times, series.survival()
        if channel == "norm":
            return series.times, series.norm()
        raise ValueError(f"channel mismatch: amplitude series has no channel {channel!r}")
    if isinstance(series, TimeSeries):
        if series.channel == channel and series.values.ndim == 1:
            return series.times, series.values
        if channel in series.columns:
            return series.times, series.column(channel)
        raise ValueError(f"channel mismatch: series carries {series.channel!r}, not {channel!r}")
    raise TypeError(f"cannot compare object of type {type(series).__name__}")


def compare(series_a, series_b, channel: str = "sigma00") -> ComparisonReport:
    """Pointwise deviation of one channel between two series on common times."""
    ta, a = _channel_values(series_a, channel)
    tb, b = _channel_values(series_b, channel)
    if ta.shape != tb.shape or not np.allclose(ta, tb, rtol=1e-12, atol=1e-14):
        raise ValueError("series do not share time samples")
    diff = np.abs(a - b)
    scale = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    k = int(np.argmax(diff))
    return ComparisonReport(channel, float(diff.max()), float(diff.mean()), float(rel.max()), float(rel.mean()), float(ta[k]))
