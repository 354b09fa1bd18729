"""Real sparse generators for the density-matrix rate equations.

Every builder returns a :class:`Generator` ``L`` such that the flattened,
real-valued state ``x`` obeys ``dx/dt = L @ x``.  Complex coherences are
stored as adjacent (Re, Im) slots.  The reservoir coherences are kept in the
``sigma_0a`` orientation (dot index first); the equations written for
``sigma_a0`` are conjugated accordingly.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import (
    NO_DETECTOR,
    ConstantWidthSpec,
    DetectorSpec,
    LorentzianDosSpec,
    ReservoirGrid,
    ValidationError,
    lorentzian_dos,
)

CONSTANT_SYSTEM = ("s00",)
CONSTANT_MODE = ("saa", "re0a", "im0a")
LORENTZIAN_SYSTEM = ("s00", "s11", "re01", "im01")
LORENTZIAN_MODE = ("saa", "re0a", "im0a", "re1a", "im1a")

POPULATIONS = ("s00", "s11", "saa")


class UnsupportedVariantError(ValueError):
    pass


class StateLayout:
    """Bijective map between (component, alpha, n) and vector slots.

    Per collector count ``n`` the rung holds the system components followed
    by the mode components of every reservoir mode in ascending energy order.
    ``alpha`` is -1 for system components.
    """

    def __init__(self, system, mode, n_modes, n_rungs=1, ladder=False):
        self.ladder = bool(ladder)
        self.system = tuple(system)
        self.mode = tuple(mode)
        self.n_modes = int(n_modes)
        self.n_rungs = int(n_rungs)
        self.rung_size = len(self.system) + len(self.mode) * self.n_modes
        self.size = self.rung_size * self.n_rungs
        self._sys_pos = {c: k for k, c in enumerate(self.system)}
        self._mode_pos = {c: k for k, c in enumerate(self.mode)}

    def __eq__(self, other):
        return (
            isinstance(other, StateLayout)
            and self.system == other.system
            and self.mode == other.mode
            and self.n_modes == other.n_modes
            and self.n_rungs == other.n_rungs
            and self.ladder == other.ladder
        )

    def __repr__(self):
        return (
            f"StateLayout(system={self.system}, mode={self.mode}, "
            f"n_modes={self.n_modes}, n_rungs={self.n_rungs}, ladder={self.ladder})"
        )

    def has(self, comp: str) -> bool:
        return comp in self._sys_pos or comp in self._mode_pos

    def index(self, comp: str, alpha: int = -1, n: int = 0) -> int:
        if not 0 <= n < self.n_rungs:
            raise KeyError(f"rung {n} outside layout")
        base = n * self.rung_size
        if comp in self._sys_pos:
            return base + self._sys_pos[comp]
        if comp in self._mode_pos:
            if not 0 <= alpha < self.n_modes:
                raise KeyError(f"mode {alpha} outside layout")
            return base + len(self.system) + alpha * len(self.mode) + self._mode_pos[comp]
        raise KeyError(f"component {comp!r} not in layout")

    def indices(self, comp: str, n: int = 0) -> np.ndarray:
        """Slot indices of ``comp`` in rung ``n`` (one per mode for mode components)."""
        if comp in self._sys_pos:
            return np.array([self.index(comp, -1, n)])
        if comp not in self._mode_pos:
            raise KeyError(f"component {comp!r} not in layout")
        base = n * self.rung_size + len(self.system) + self._mode_pos[comp]
        return base + len(self.mode) * np.arange(self.n_modes)

    def all_rungs(self, comp: str) -> np.ndarray:
        return np.concatenate([self.indices(comp, n) for n in range(self.n_rungs)])

    def slot(self, i: int) -> tuple[str, int, int]:
        n, r = divmod(int(i), self.rung_size)
        if r < len(self.system):
            return self.system[r], -1, n
        a, k = divmod(r - len(self.system), len(self.mode))
        return self.mode[k], a, n

    def slots(self):
        return [self.slot(i) for i in range(self.size)]

    def traced(self) -> "StateLayout":
        return StateLayout(self.system, self.mode, self.n_modes, 1)

    def to_traced_index(self) -> np.ndarray:
        """For every slot, the slot of the same (component, alpha) with n = 0."""
        return np.arange(self.size) % self.rung_size


@dataclass(frozen=True, eq=False)
class Generator:
    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    layout: StateLayout
    variant: str
    params: dict
    metadata: dict = field(default_factory=dict)

    def matrix(self, fmt: str = "csr"):
        m = sp.coo_matrix(
            (self.values, (self.rows, self.cols)), shape=(self.dimension, self.dimension)
        )
        return m.asformat(fmt)

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()

    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist()))

    def entry(self, row: int, col: int) -> float:
        hit = np.flatnonzero((self.rows == row) & (self.cols == col))
        return float(self.values[hit[0]]) if hit.size else 0.0

    def same_entries(self, other: "Generator") -> bool:
        return (
            self.dimension == other.dimension
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.cols, other.cols)
            and np.array_equal(self.values, other.values)
        )

    @property
    def params_hash(self) -> str:
        blob = json.dumps(self.params, sort_keys=True, default=float).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# {self.variant},{self.dimension},{self.params_hash}\n")
        buf.write("row,col,value\n")
        for r, c, v in zip(self.rows, self.cols, self.values):
            buf.write(f"{r},{c},{v:.17g}\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    def initial_state(self) -> np.ndarray:
        return canonical_initial_state(self.layout)


def canonical_initial_state(layout: StateLayout) -> np.ndarray:
    """Dot occupied, reservoir empty, no electrons in the collector."""
    x0 = np.zeros(layout.size)
    x0[layout.index("s00", -1, 0)] = 1.0
    return x0


class _Assembler:
    """Collects real triplets for complex-valued rate equations.

    ``z`` arguments are (re_idx, im_idx) pairs of equal-length index arrays.
    """

    def __init__(self, dim):
        self.dim = dim
        self._r, self._c, self._v = [], [], []

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(
            np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64), np.asarray(vals, dtype=float)
        )
        self._r.append(rows.ravel())
        self._c.append(cols.ravel())
        self._v.append(vals.ravel())

    def rotate(self, z, damping, freq):
        # dz/dt += (-damping + i*freq) * z
        re, im = z
        self.add(re, re, -damping)
        self.add(re, im, -freq)
        self.add(im, re, freq)
        self.add(im, im, -damping)

    def i_real(self, z, c, x):
        # dz/dt += i*c*x with x real
        self.add(z[1], x, c)

    def i_cplx(self, z, c, w):
        # dz/dt += i*c*w
        self.add(z[0], w[1], -c)
        self.add(z[1], w[0], c)

    def i_conj(self, z, c, w):
        # dz/dt += i*c*conj(w)
        self.add(z[0], w[1], c)
        self.add(z[1], w[0], c)

    def scaled(self, z, c, w):
        # dz/dt += c*w with c real
        self.add(z[0], w[0], c)
        self.add(z[1], w[1], c)

    def population_flux(self, x, c, w):
        # dx/dt += i*c*(w - conj(w)) = -2*c*Im(w)
        self.add(x, w[1], -2.0 * c)

    def build(self, layout, variant, params, metadata) -> Generator:
        rows = np.concatenate(self._r) if self._r else np.zeros(0, np.int64)
        cols = np.concatenate(self._c) if self._c else np.zeros(0, np.int64)
        vals = np.concatenate(self._v) if self._v else np.zeros(0)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite generator coefficient")
        m = sp.coo_matrix((vals, (rows, cols)), shape=(self.dim, self.dim)).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        coo = m.tocoo()
        # csr -> coo keeps row-major order with sorted columns
        return Generator(
            dimension=self.dim,
            rows=coo.row.astype(np.int64),
            cols=coo.col.astype(np.int64),
            values=coo.data.astype(float),
            layout=layout,
            variant=variant,
            params=params,
            metadata=metadata,
        )


def _pair(layout, base, n=0):
    return layout.indices("re" + base, n), layout.indices("im" + base, n)


def constant_mode_couplings(spec: ConstantWidthSpec, grid: ReservoirGrid) -> np.ndarray:
    """Per-mode coupling sqrt(Gamma0*dE/(2*pi)), i.e. flat density 1/dE."""
    return np.full(grid.n_modes, math.sqrt(spec.Gamma0 * grid.delta / (2.0 * math.pi)))


def lorentzian_mode_couplings(spec: LorentzianDosSpec, grid: ReservoirGrid) -> np.ndarray:
    """Per-mode coupling Omega*sqrt(rho(E_a)*dE): each mode carries the weight
    of its energy cell."""
    return spec.Omega * np.sqrt(lorentzian_dos(spec, grid.energies) * grid.delta)


def _resolve_couplings(omega_of_alpha, default, grid):
    if omega_of_alpha is None:
        return default
    g = np.broadcast_to(np.asarray(omega_of_alpha, dtype=float), (grid.n_modes,)).copy()
    if not np.all(np.isfinite(g)):
        raise ValidationError("omega_of_alpha", "mode couplings must be finite")
    return g


def _grid_meta(grid, width):
    meta = {"delta_E": grid.delta, "coarse_grid": bool(width > 0 and grid.delta > width / 4.0)}
    return meta


def _snapshot(spec, det, grid, **extra):
    p = {"model": spec.params(), "detector": det.params(), "grid": grid.params()}
    p.update(extra)
    return p


# --- constant width ---------------------------------------------------------


def _constant_traced(spec, det, grid, omega_of_alpha, variant):
    layout = StateLayout(CONSTANT_SYSTEM, CONSTANT_MODE, grid.n_modes)
    g = _resolve_couplings(omega_of_alpha, constant_mode_couplings(spec, grid), grid)
    a = _Assembler(layout.size)
    s00 = layout.indices("s00")
    saa = layout.indices("saa")
    z = _pair(layout, "0a")
    eps_a0 = grid.energies - spec.E0

    a.add(s00, s00, -spec.Gamma0)
    # d sigma_aa/dt = i*Omega_a*(sigma_a0 - sigma_0a) = 2*Omega_a*Im(sigma_0a)
    a.add(saa, z[1], 2.0 * g)
    a.rotate(z, (spec.Gamma0 + det.GammaD) / 2.0, eps_a0)
    a.i_real(z, g, s00)

    meta = _grid_meta(grid, spec.Gamma0)
    return a.build(layout, variant, _snapshot(spec, det, grid), meta)


def build_unmeasured_constant(spec: ConstantWidthSpec, grid: ReservoirGrid, omega_of_alpha=None) -> Generator:
    """Flat-reservoir decay without a detector."""
    return _constant_traced(spec, NO_DETECTOR, grid, omega_of_alpha, "unmeasured_constant")


def build_measured_constant(
    spec: ConstantWidthSpec, det: DetectorSpec, grid: ReservoirGrid, omega_of_alpha=None
) -> Generator:
    """Flat-reservoir decay traced over the detector: the reservoir coherences
    pick up the extra damping GammaD/2; populations are unchanged."""
    return _constant_traced(spec, det, grid, omega_of_alpha, "measured_constant")


def _check_truncation(truncation):
    if truncation not in ("lumped", "absorbing"):
        raise ValidationError("truncation", "truncation must be 'lumped' or 'absorbing'")


def _rung_gain(a, layout, comp_pairs, real_slots, n, n_max, truncation):
    """Add the n-1 -> n gain terms for one rung.

    ``real_slots`` is a list of (component, rate) and ``comp_pairs`` a list of
    (base, rate).  With lumped truncation the top rung also feeds itself so
    that it holds every count >= n_max.
    """
    for comp, rate in real_slots:
        if n > 0:
            a.add(layout.indices(comp, n), layout.indices(comp, n - 1), rate)
        if n == n_max and truncation == "lumped":
            a.add(layout.indices(comp, n), layout.indices(comp, n), rate)
    for base, rate in comp_pairs:
        if n > 0:
            a.scaled(_pair(layout, base, n), rate, _pair(layout, base, n - 1))
        if n == n_max and truncation == "lumped":
            a.scaled(_pair(layout, base, n), rate, _pair(layout, base, n))


def build_ladder_constant(
    spec: ConstantWidthSpec,
    det: DetectorSpec,
    grid: ReservoirGrid,
    n_max: int,
    omega_of_alpha=None,
    truncation: str = "lumped",
) -> Generator:
    """Detector-resolved equations, rung n = electrons passed into the collector.

    ``truncation='lumped'`` makes rung ``n_max`` collect all counts >= n_max
    (exact for traced quantities); ``'absorbing'`` drops transfers out of the
    top rung.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValidationError("n_max", "n_max must be non-negative")
    _check_truncation(truncation)
    layout = StateLayout(CONSTANT_SYSTEM, CONSTANT_MODE, grid.n_modes, n_max + 1, ladder=True)
    g = _resolve_couplings(omega_of_alpha, constant_mode_couplings(spec, grid), grid)
    D, Dp = det.D, det.Dprime
    coherent = math.sqrt(D * Dp)
    eps_a0 = grid.energies - spec.E0
    a = _Assembler(layout.size)
    for n in range(n_max + 1):
        s00 = layout.indices("s00", n)
        saa = layout.indices("saa", n)
        z = _pair(layout, "0a", n)
        a.add(s00, s00, -(spec.Gamma0 + Dp))
        a.add(saa, saa, -D)
        a.add(saa, z[1], 2.0 * g)
        a.rotate(z, (spec.Gamma0 + D + Dp) / 2.0, eps_a0)
        a.i_real(z, g, s00)
        _rung_gain(a, layout, [("0a", coherent)], [("s00", Dp), ("saa", D)], n, n_max, truncation)
    meta = _grid_meta(grid, spec.Gamma0)
    meta.update(n_max=n_max, truncation=truncation)
    params = _snapshot(spec, det, grid, n_max=n_max, truncation=truncation)
    return a.build(layout, "ladder_constant", params, meta)


# --- Lorentzian density of states --------------------------------------------


def _lorentzian_traced(spec, det, grid, variant):
    layout = StateLayout(LORENTZIAN_SYSTEM, LORENTZIAN_MODE, grid.n_modes)
    g = lorentzian_mode_couplings(spec, grid)
    Om, G1, Gb, Gd = spec.Omega, spec.Gamma1, spec.GammaBar, det.GammaD
    a = _Assembler(layout.size)
    s00, s11 = layout.indices("s00"), layout.indices("s11")
    z01 = _pair(layout, "01")
    saa = layout.indices("saa")
    p = _pair(layout, "0a")
    q = _pair(layout, "1a")
    E = grid.energies

    a.add(s00, s00, -Gb)
    a.population_flux(s00, Om, z01)
    a.add(s11, s11, -G1)
    a.population_flux(s11, -Om, z01)

    a.rotate(z01, (Gb + G1 + Gd) / 2.0, spec.E1 - spec.E0)
    a.i_real(z01, Om, s00)
    a.i_real(z01, -Om, s11)

    a.add(saa, p[1], 2.0 * g)

    a.rotate(p, (Gb + Gd) / 2.0, E - spec.E0)
    a.i_real(p, g, s00)
    a.i_cplx(p, -Om, q)

    a.rotate(q, G1 / 2.0, E - spec.E1)
    a.i_conj(q, g, z01)
    a.i_cplx(q, -Om, p)

    return a.build(layout, variant, _snapshot(spec, det, grid), _grid_meta(grid, G1))


def build_unmeasured_lorentzian(spec: LorentzianDosSpec, grid: ReservoirGrid) -> Generator:
    """Dot level plus auxiliary resonance level E1 (width Gamma1), background
    width GammaBar, and explicit reservoir modes."""
    return _lorentzian_traced(spec, NO_DETECTOR, grid, "unmeasured_lorentzian")


def _require_no_background(spec):
    if spec.GammaBar != 0.0:
        raise UnsupportedVariantError("measured Lorentzian model requires GammaBar = 0")


def build_measured_lorentzian(spec: LorentzianDosSpec, det: DetectorSpec, grid: ReservoirGrid) -> Generator:
    """Lorentzian model traced over the detector.

    GammaD damps sigma_01 and sigma_0a only; the population equations do not
    see the detector.
    """
    _require_no_background(spec)
    return _lorentzian_traced(spec, det, grid, "measured_lorentzian")


def build_ladder_lorentzian(
    spec: LorentzianDosSpec,
    det: DetectorSpec,
    grid: ReservoirGrid,
    n_max: int,
    truncation: str = "lumped",
) -> Generator:
    """Detector-resolved Lorentzian model (GammaBar = 0)."""
    _require_no_background(spec)
    n_max = int(n_max)
    if n_max < 0:
        raise ValidationError("n_max", "n_max must be non-negative")
    _check_truncation(truncation)
    layout = StateLayout(LORENTZIAN_SYSTEM, LORENTZIAN_MODE, grid.n_modes, n_max + 1, ladder=True)
    g = lorentzian_mode_couplings(spec, grid)
    Om, G1 = spec.Omega, spec.Gamma1
    D, Dp = det.D, det.Dprime
    coherent = math.sqrt(D * Dp)
    E = grid.energies
    eps10 = spec.E1 - spec.E0
    a = _Assembler(layout.size)
    for n in range(n_max + 1):
        s00, s11 = layout.indices("s00", n), layout.indices("s11", n)
        z01 = _pair(layout, "01", n)
        saa = layout.indices("saa", n)
        p = _pair(layout, "0a", n)
        q = _pair(layout, "1a", n)

        a.add(s00, s00, -Dp)
        a.population_flux(s00, Om, z01)
        a.add(s11, s11, -(D + G1))
        a.population_flux(s11, -Om, z01)

        a.rotate(z01, (D + Dp + G1) / 2.0, eps10)
        a.i_real(z01, Om, s00)
        a.i_real(z01, -Om, s11)

        a.add(saa, saa, -D)
        a.add(saa, p[1], 2.0 * g)

        a.rotate(p, (D + Dp) / 2.0, E - spec.E0)
        a.i_real(p, g, s00)
        a.i_cplx(p, -Om, q)

        a.rotate(q, (2.0 * D + G1) / 2.0, E - spec.E1)
        a.i_conj(q, g, z01)
        a.i_cplx(q, -Om, p)

        _rung_gain(
            a,
            layout,
            [("01", coherent), ("0a", coherent), ("1a", D)],
            [("s00", Dp), ("s11", D), ("saa", D)],
            n,
            n_max,
            truncation,
        )
    meta = _grid_meta(grid, G1)
    meta.update(n_max=n_max, truncation=truncation)
    params = _snapshot(spec, det, grid, n_max=n_max, truncation=truncation)
    return a.build(layout, "ladder_lorentzian", params, meta)


def collapse_rung(ladder: Generator, n: int) -> sp.csr_matrix:
    """Columns of rung ``n`` with rows summed over all rungs.

    For an exact ladder this equals the traced generator: probability leaving
    slot (c, n) lands in some rung of the same traced component.
    """
    layout = ladder.layout
    lo, hi = n * layout.rung_size, (n + 1) * layout.rung_size
    keep = (ladder.cols >= lo) & (ladder.cols < hi)
    rows = ladder.rows[keep] % layout.rung_size
    cols = ladder.cols[keep] - lo
    m = sp.coo_matrix((ladder.values[keep], (rows, cols)), shape=(layout.rung_size,) * 2).tocsr()
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


def population_submatrix(gen: Generator) -> np.ndarray:
    """Dense block of ``gen`` acting among population slots (s00, s11, saa)."""
    idx = np.concatenate(
        [gen.layout.all_rungs(c) for c in POPULATIONS if gen.layout.has(c)]
    )
    idx.sort()
    return gen.matrix()[idx][:, idx].toarray()
