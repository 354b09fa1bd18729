"""Time evolution of the rate equations and derived observables."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .generator import POPULATIONS, Generator, StateLayout
from .model import DetectorSpec, ValidationError

_DENSE_LIMIT = 96


class NumericalError(RuntimeError):
    """Integration or linear solve failed."""


class LayoutError(KeyError):
    """Requested component is not present in the series' layout."""


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_step: float = math.inf
    method: str = "expm"

    def __post_init__(self):
        if not 0.0 < self.rtol <= 1e-3:
            raise ValidationError("rtol", "rtol must be in (0, 1e-3]")
        if not self.atol > 0.0:
            raise ValidationError("atol", "atol must be positive")
        if not self.max_step > 0.0:
            raise ValidationError("max_step", "max_step must be positive")
        if self.method not in ("adaptive", "expm"):
            raise ValidationError("method", "method must be 'adaptive' or 'expm'")


@dataclass
class TimeSeries:
    """Samples of one or more channels.

    ``values`` is 1-D for a scalar channel, or 2-D (time, column).  Full state
    snapshots use channel ``"state"`` and carry the generator layout.
    """

    times: np.ndarray
    values: np.ndarray
    channel: str
    layout: StateLayout | None = None
    columns: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.ndim != 1 or len(self.values) != len(self.times):
            raise ValueError("values must have one row per time sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("time series contains non-finite values")

    def __len__(self):
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        if self.values.ndim == 1 and name == self.channel:
            return self.values
        if name in self.columns:
            return self.values[:, self.columns.index(name)]
        raise LayoutError(name)

    def to_csv(self, path=None, comments=()) -> str:
        buf = io.StringIO()
        for line in comments:
            buf.write(f"# {line}\n")
        names = self.columns or (self.channel,)
        buf.write("t," + ",".join(names) + "\n")
        vals = self.values.reshape(len(self.times), -1)
        for t, row in zip(self.times, vals):
            buf.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in row) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text


def default_times(t_max: float, n: int = 400) -> np.ndarray:
    """t = 0 followed by n - 1 log-spaced samples from 0.01 to t_max."""
    if t_max <= 0.01:
        raise ValidationError("t_max", "t_max must exceed 0.01")
    return np.concatenate([[0.0], np.logspace(-2.0, math.log10(t_max), n - 1)])


def _check_times(t_samples) -> np.ndarray:
    t = np.asarray(t_samples, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValidationError("t_samples", "t_samples must be a non-empty 1-D array")
    if t[0] < 0 or np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
        raise ValidationError("t_samples", "t_samples must be finite, ascending and start at t >= 0")
    return t


def _propagate_expm(A, x0, t):
    n = A.shape[0]
    out = np.empty((t.size, n))
    x = x0.copy()
    prev = 0.0
    if n <= _DENSE_LIMIT:
        Ad = A.toarray()
        cache = {}
        for k, tk in enumerate(t):
            dt = tk - prev
            if dt > 0:
                key = round(dt, 15)
                if key not in cache:
                    cache[key] = sla.expm(Ad * dt)
                x = cache[key] @ x
            out[k] = x
            prev = tk
        return out
    A = A.tocsr()
    steps = np.diff(np.concatenate([[0.0], t]))
    uniform = t.size > 2 and np.allclose(steps[1:], steps[1], rtol=1e-12, atol=0)
    if uniform:
        if t[0] > 0:
            x = spla.expm_multiply(A * t[0], x)
        out[:] = spla.expm_multiply(A, x, start=0.0, stop=t[-1] - t[0], num=t.size, endpoint=True)
        return out
    for k, dt in enumerate(steps):
        if dt > 0:
            x = spla.expm_multiply(A * dt, x)
        out[k] = x
    return out


def _propagate_adaptive(A, x0, t, cfg):
    A = A.tocsr()
    if t[-1] == 0.0:
        return x0[None, :].copy()
    sol = solve_ivp(
        lambda _t, x: A @ x,
        (0.0, t[-1]),
        x0,
        method="DOP853",
        t_eval=t,
        rtol=cfg.rtol,
        atol=cfg.atol,
        max_step=cfg.max_step,
    )
    if sol.status != 0:
        reached = sol.t[-1] if sol.t.size else 0.0
        raise NumericalError(f"adaptive integration failed at t={reached:.6g}: {sol.message}")
    return sol.y.T


def evolve(gen: Generator, x0=None, t_samples=None, cfg: IntegratorConfig | None = None) -> TimeSeries:
    """State snapshots of dx/dt = L x at the requested times."""
    cfg = cfg or IntegratorConfig()
    x0 = gen.initial_state() if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (gen.dimension,):
        raise ValidationError("x0", f"x0 must have shape ({gen.dimension},)")
    t = _check_times(t_samples if t_samples is not None else default_times(10.0))
    A = gen.matrix()
    if cfg.method == "expm":
        states = _propagate_expm(A, x0, t)
    else:
        states = _propagate_adaptive(A, x0, t, cfg)
    if not np.all(np.isfinite(states)):
        bad = np.flatnonzero(~np.all(np.isfinite(states), axis=1))[0]
        raise NumericalError(f"non-finite state at t={t[bad]:.6g}")
    meta = {"variant": gen.variant, "method": cfg.method}
    return TimeSeries(t, states, "state", layout=gen.layout, meta=meta)


def _require_state(series: TimeSeries) -> StateLayout:
    if series.channel != "state" or series.layout is None:
        raise LayoutError("series does not hold full state snapshots")
    return series.layout


def component_sum(series: TimeSeries, comp: str) -> np.ndarray:
    """Sum of ``comp`` over all modes and all collector counts."""
    layout = _require_state(series)
    if not layout.has(comp):
        raise LayoutError(comp)
    return series.values[:, layout.all_rungs(comp)].sum(axis=1)


def survival_probability(series: TimeSeries) -> TimeSeries:
    """sigma_00(t), summed over collector counts for ladder states."""
    s = component_sum(series, "s00")
    return TimeSeries(series.times, s, "sigma00", meta=dict(series.meta))


def total_probability(series: TimeSeries) -> TimeSeries:
    layout = _require_state(series)
    tot = sum(component_sum(series, c) for c in POPULATIONS if layout.has(c))
    return TimeSeries(series.times, tot, "trace", meta=dict(series.meta))


def rung_populations(series: TimeSeries) -> np.ndarray:
    """P_n(t): total population in each collector rung, shape (time, rung)."""
    layout = _require_state(series)
    out = np.zeros((len(series), layout.n_rungs))
    for n in range(layout.n_rungs):
        for c in POPULATIONS:
            if layout.has(c):
                out[:, n] += series.values[:, layout.indices(c, n)].sum(axis=1)
    return out


def top_rung_mass(series: TimeSeries) -> np.ndarray:
    return rung_populations(series)[:, -1]


def detector_current(series: TimeSeries, det: DetectorSpec) -> TimeSeries:
    """Collector count rate and mean count for a detector-resolved run.

    The rate is D' while the electron sits on E0 and D otherwise:
    D' * sigma_00 + D * (P_tot - sigma_00).  P_tot is the total probability
    held by the state; it is 1 in the continuum limit and slightly less on a
    finite reservoir window, and using it keeps d<n>/dt equal to the rate.
    """
    layout = _require_state(series)
    if not layout.ladder:
        raise LayoutError("detector_current needs a detector-resolved (ladder) series")
    p_occ = component_sum(series, "s00")
    p_tot = total_probability(series).values
    rate = det.Dprime * p_occ + det.D * (p_tot - p_occ)
    pn = rung_populations(series)
    mean_n = pn @ np.arange(layout.n_rungs)
    values = np.column_stack([rate, mean_n])
    return TimeSeries(series.times, values, "current", columns=("current", "mean_n"), meta=dict(series.meta))


def _backward_closure(A: sp.csr_matrix, seeds) -> np.ndarray:
    """Slots that the seed rows depend on, transitively."""
    seen = np.zeros(A.shape[0], dtype=bool)
    stack = list(seeds)
    seen[stack] = True
    indptr, indices = A.indptr, A.indices
    while stack:
        r = stack.pop()
        for c in indices[indptr[r]:indptr[r + 1]]:
            if not seen[c]:
                seen[c] = True
                stack.append(c)
    return np.flatnonzero(seen)


def decay_time(gen: Generator, x0=None) -> float:
    """Mean dwell time T = int_0^inf sigma_00 dt by a linear solve.

    The solve is restricted to the slots sigma_00 depends on; that block
    evolves autonomously and must be fully decaying.
    """
    x0 = gen.initial_state() if x0 is None else np.asarray(x0, dtype=float)
    A = gen.matrix("csr")
    seeds = gen.layout.all_rungs("s00")
    S = _backward_closure(A, seeds)
    block = A[S][:, S]
    rhs = -x0[S]
    if S.size <= 400:
        dense = block.toarray()
        ev = np.linalg.eigvals(dense) if S.size else np.zeros(0)
        if ev.size == 0 or np.max(ev.real) >= -1e-13 * max(1.0, np.abs(ev).max()):
            raise NumericalError("non-decaying subspace")
        y = np.linalg.solve(dense, rhs)
    else:
        with np.errstate(all="ignore"):
            y = spla.spsolve(block.tocsc(), rhs)
        if not np.all(np.isfinite(y)) or np.linalg.norm(block @ y - rhs) > 1e-8 * max(1.0, np.linalg.norm(y)):
            raise NumericalError("non-decaying subspace")
    pos = np.searchsorted(S, seeds)
    return float(y[pos].sum())
