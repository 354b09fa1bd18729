"""zenodyn command line: figure data, config runs, closed forms, validation.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 a validation
check failed.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic, oracle
from .dynamics import (
    IntegratorConfig,
    NumericalError,
    decay_time,
    detector_current,
    evolve,
    rung_populations,
    survival_probability,
    total_probability,
)
from .generator import (
    UnsupportedVariantError,
    build_ladder_constant,
    build_ladder_lorentzian,
    build_measured_constant,
    build_measured_lorentzian,
    build_unmeasured_constant,
    build_unmeasured_lorentzian,
)
from .model import (
    NO_DETECTOR,
    ConstantWidthSpec,
    DetectorSpec,
    LorentzianDosSpec,
    ReservoirGrid,
    ValidationError,
    spec_from_dict,
)
from .spectrum import (
    Spectrum,
    SpectrumError,
    constant_spectrum_scan,
    find_peaks_list,
    fwhm,
    spectral_density,
    spectrum_scan,
    time_integrated_block,
    unmeasured_spectrum_closed,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4

FIGURES = ("fig5a", "fig5b", "fig6", "fig7", "fig8")
FIG5_T_MAX = 30.0
FIG5_SAMPLES = 600
NEUTRAL_TOL = 1e-9


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentReport:
    experiment: str
    parameters: dict = field(default_factory=dict)
    manifest: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "parameters": self.parameters,
            "manifest": list(self.manifest),
            "summary": self.summary,
            "flags": self.flags,
            "passed": self.passed,
        }

    def write(self, outdir: Path) -> Path:
        outdir = Path(outdir)
        for name in self.manifest:
            if not (outdir / name).is_file():
                raise FileNotFoundError(f"manifest entry {name} was not written")
        path = outdir / "report.json"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(self.as_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- shared helpers ----------------------------------------------------------


def thread_count() -> int:
    raw = os.environ.get("ZENODYN_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError("ZENODYN_THREADS", "ZENODYN_THREADS must be a positive integer") from None
    if n < 1:
        raise ValidationError("ZENODYN_THREADS", "ZENODYN_THREADS must be a positive integer")
    return n


def _sweep(func, items):
    """Map over a parameter sweep; results come back in input order."""
    items = list(items)
    n = min(thread_count(), len(items)) or 1
    if n == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def _write_table(path: Path, header, columns, comments=()):
    cols = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_table(path):
    """Read a CSV written by this tool: returns (header, array)."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, data


def _write_gnuplot(path: Path, csv_name: str, header, logy=False, xlabel="", ylabel=""):
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
    ]
    if logy:
        lines.append("set logscale y")
    plots = [f"'{csv_name}' using 1:{k + 2} with lines" for k in range(len(header) - 1)]
    lines.append("plot " + ", \\\n     ".join(plots))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sigma_grid(spec: LorentzianDosSpec) -> ReservoirGrid:
    """Small reservoir grid for runs where only the dot and E1 matter."""
    width = max(spec.Gamma1, spec.GammaBar, spec.Omega)
    return ReservoirGrid.centered(0.5 * (spec.E0 + spec.E1), 40.0 * width, 32)


def lorentzian_generator(spec: LorentzianDosSpec, det: DetectorSpec, grid: ReservoirGrid | None = None):
    grid = grid or _sigma_grid(spec)
    if det.GammaD == 0.0:
        return build_unmeasured_lorentzian(spec, grid)
    return build_measured_lorentzian(spec, det, grid)


def constant_generator(spec: ConstantWidthSpec, det: DetectorSpec, grid: ReservoirGrid):
    if det.GammaD == 0.0:
        return build_unmeasured_constant(spec, grid)
    return build_measured_constant(spec, det, grid)


def fitted_rate(times, sigma, frac=0.5):
    """Slope of -log(sigma00) over the last ``frac`` of the window."""
    times = np.asarray(times)
    sigma = np.asarray(sigma)
    m = (times >= times[-1] * (1.0 - frac)) & (sigma > 1e-250)
    if m.sum() < 2:
        return float("nan")
    return float(-np.polyfit(times[m], np.log(sigma[m]), 1)[0])


def classify_regime(spec: LorentzianDosSpec, det: DetectorSpec) -> str:
    """'zeno' if monitoring lengthens the decay time, 'anti-zeno' if it shortens it."""
    if spec.GammaBar != 0.0:
        raise UnsupportedVariantError("regime classification needs GammaBar = 0")
    t0 = analytic.measured_decay_time(spec.Omega, spec.eps01, spec.Gamma1, 0.0)
    td = analytic.measured_decay_time(spec.Omega, spec.eps01, spec.Gamma1, det.GammaD)
    if abs(td - t0) / t0 < NEUTRAL_TOL:
        return "neutral"
    return "zeno" if td > t0 else "anti-zeno"


# --- figures -------------------------------------------------------------------


def _fig5_spec(eps10):
    return LorentzianDosSpec(E0=0.0, E1=eps10, Omega=1.0, Gamma1=10.0)


def _survival_curves(spec, gammas, times):
    def one(gd):
        gen = lorentzian_generator(spec, DetectorSpec.from_gamma_d(gd))
        return survival_probability(evolve(gen, t_samples=times)).values, decay_time(gen)

    return _sweep(one, gammas)


def _ordering_flags(times, unmeasured, measured):
    """Flags from the two survival curves; every flag is recomputable from the CSV."""
    long_win = (times >= 3.0) & (times <= 30.0)
    short_win = (times > 0.0) & (times < 0.3)
    zeno_win = (times >= 0.5) & (times <= 10.0)
    return {
        "zeno": bool(np.all(measured[zeno_win] > unmeasured[zeno_win])) if zeno_win.any() else None,
        "antizeno": bool(np.all(measured[long_win] < unmeasured[long_win])) if long_win.any() else None,
        "reversal": bool(np.all(measured[short_win] > unmeasured[short_win])) if short_win.any() else None,
    }


def fig5_flags_from_csv(fig_id, path):
    _, d = read_table(path)
    return _ordering_flags(d[:, 0], d[:, 1], d[:, 2])


def _run_fig5(fig_id, outdir):
    eps10 = 0.0 if fig_id == "fig5a" else 10.0
    spec = _fig5_spec(eps10)
    gammas = (0.0, 10.0)
    if fig_id == "fig6":
        times = np.linspace(0.0, 1.0, 201)
    else:
        times = np.linspace(0.0, FIG5_T_MAX, FIG5_SAMPLES)
    results = _survival_curves(spec, gammas, times)
    curves = [r[0] for r in results]
    header = ["t", "sigma00_Gd0", "sigma00_Gd10", "log10_sigma00_Gd0", "log10_sigma00_Gd10"]
    with np.errstate(divide="ignore"):
        logs = [np.log10(np.maximum(c, 1e-300)) for c in curves]
    csv_name = f"{fig_id}.csv"
    comments = [f"experiment={fig_id}", f"params={json.dumps(spec.params(), sort_keys=True)}", "GammaD=0,10"]
    _write_table(outdir / csv_name, header, [times, *curves, *logs], comments)
    _write_gnuplot(outdir / f"{fig_id}.gp", csv_name, header[:3], logy=fig_id != "fig6",
                   xlabel="t [1/Omega]", ylabel="sigma00")
    flags = _ordering_flags(times, curves[0], curves[1])
    if fig_id == "fig5a":
        out_flags = {"zeno_ordering": flags["zeno"]}
    elif fig_id == "fig5b":
        out_flags = {"antizeno_ordering": flags["antizeno"] and flags["reversal"], "short_time_reversal": flags["reversal"]}
    else:
        out_flags = {"short_time_reversal": flags["reversal"]}
    summary = {
        "decay_time": {"Gd0": results[0][1], "Gd10": results[1][1]},
        "decay_time_closed": {f"Gd{g:g}": analytic.measured_decay_time(1.0, -eps10, 10.0, g) for g in gammas},
        "fitted_rate": {f"Gd{g:g}": fitted_rate(times, c) for g, c in zip(gammas, curves)},
        "regime": classify_regime(spec, DetectorSpec.from_gamma_d(10.0)),
    }
    params = {"model": spec.params(), "GammaD": list(gammas), "t_max": float(times[-1]), "n_samples": int(times.size)}
    return ExperimentReport(fig_id, params, [csv_name, f"{fig_id}.gp"], summary, out_flags)


def _peak_summary(spec_obj):
    return [{"energy": p.energy, "height": p.height, "fwhm": p.fwhm} for p in find_peaks_list(spec_obj)]


def peak_swap_flags(energies, densities, E0, E1):
    """Flags for the fig8 sweep (GammaD = 0, 0.5, 10)."""

    def dominant_near(d):
        e = energies[int(np.argmax(d))]
        return "E0" if abs(e - E0) < abs(e - E1) else "E1"

    mid = densities[1]
    peaks = find_peaks_list(Spectrum(energies, mid))
    top = mid.max()
    strong = [p for p in peaks if p.height > 0.25 * top]
    near0 = any(abs(p.energy - E0) < abs(p.energy - E1) for p in strong)
    near1 = any(abs(p.energy - E1) < abs(p.energy - E0) for p in strong)
    swap = dominant_near(densities[0]) == "E0" and dominant_near(densities[-1]) == "E1"
    return {"peak_swap": bool(swap), "two_peaks_mid": bool(len(strong) >= 2 and near0 and near1)}


def _run_spectrum_fig(fig_id, outdir):
    if fig_id == "fig7":
        spec = LorentzianDosSpec(E0=0.0, E1=0.0, Omega=1.0, Gamma1=10.0)
        gammas = (0.0, 10.0)
        energies = np.linspace(-40.0, 40.0, 16001)
    else:
        spec = LorentzianDosSpec(E0=0.0, E1=5.0, Omega=1.0, Gamma1=0.5)
        gammas = (0.0, 0.5, 10.0)
        energies = np.linspace(-10.0, 15.0, 25001)
    scans = _sweep(lambda g: spectrum_scan(spec, DetectorSpec.from_gamma_d(g), energies), gammas)
    header = ["E_alpha"] + [f"P_Gd{g:g}" for g in gammas]
    csv_name = f"{fig_id}.csv"
    comments = [
        f"experiment={fig_id}",
        f"params={json.dumps(spec.params(), sort_keys=True)}",
        "GammaD=" + ",".join(f"{g:g}" for g in gammas),
    ]
    _write_table(outdir / csv_name, header, [energies] + [s.density for s in scans], comments)
    _write_gnuplot(outdir / f"{fig_id}.gp", csv_name, header, xlabel="E_alpha [Omega]", ylabel="P(E_alpha)")
    summary = {
        "integral": {f"Gd{g:g}": s.metadata["integral"] for g, s in zip(gammas, scans)},
        "peaks": {f"Gd{g:g}": _peak_summary(s) for g, s in zip(gammas, scans)},
    }
    if fig_id == "fig7":
        widths = [fwhm(s) for s in scans]
        summary["fwhm"] = {f"Gd{g:g}": w for g, w in zip(gammas, widths)}
        flags = {"broadening": bool(widths[1] > 5.0 * widths[0])}
    else:
        flags = peak_swap_flags(energies, [s.density for s in scans], spec.E0, spec.E1)
    params = {"model": spec.params(), "GammaD": list(gammas), "energies": [energies[0], energies[-1], energies.size]}
    return ExperimentReport(fig_id, params, [csv_name, f"{fig_id}.gp"], summary, flags)


def run_figure(fig_id: str, outdir) -> ExperimentReport:
    if fig_id not in FIGURES:
        raise ValidationError("figure", f"unknown figure id {fig_id!r}; choose from {', '.join(FIGURES)}")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if fig_id in ("fig5a", "fig5b", "fig6"):
        report = _run_fig5(fig_id, outdir)
    else:
        report = _run_spectrum_fig(fig_id, outdir)
    report.write(outdir)
    return report


# --- config runs ---------------------------------------------------------------

COMMANDS = ("decay", "spectrum", "decaytime", "ladder", "validate")


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(cfg) - {"model", "detector", "grid", "time", "ladder", "spectrum"}
    if unknown:
        raise ConfigError(f"{path}: unknown top-level keys {sorted(unknown)}")
    return cfg


@dataclass(frozen=True)
class RunSetup:
    spec: object
    det: DetectorSpec
    grid: ReservoirGrid
    times: np.ndarray
    integ: IntegratorConfig
    raw: dict


def _section(cfg, key):
    sec = cfg.get(key, {})
    if not isinstance(sec, dict):
        raise ValidationError(key, f"{key} must be an object")
    return sec


def parse_config(cfg: dict) -> RunSetup:
    if "model" not in cfg:
        raise ValidationError("model", "config needs a model section")
    spec = spec_from_dict(cfg["model"])
    d = _section(cfg, "detector")
    if set(d) - {"D", "Dprime"}:
        raise ValidationError("detector", "detector accepts only D and Dprime")
    det = DetectorSpec(d.get("D", 0.0), d.get("Dprime", 0.0))
    g = _section(cfg, "grid")
    if g:
        try:
            grid = ReservoirGrid(g["e_min"], g["e_max"], g["n_modes"])
        except KeyError as exc:
            raise ValidationError("grid", f"grid needs {exc.args[0]}") from None
    else:
        width = spec.Gamma0 if isinstance(spec, ConstantWidthSpec) else max(spec.Gamma1, spec.GammaBar, spec.Omega)
        center = spec.E0 if isinstance(spec, ConstantWidthSpec) else 0.5 * (spec.E0 + spec.E1)
        grid = ReservoirGrid.centered(center, 40.0 * max(width, 1e-12), 64)
    t = _section(cfg, "time")
    if set(t) - {"t_max", "n_samples", "rtol", "atol", "samples", "method"}:
        raise ValidationError("time", "unknown key in time section")
    integ = IntegratorConfig(rtol=t.get("rtol", 1e-9), atol=t.get("atol", 1e-12), method=t.get("method", "expm"))
    if "samples" in t:
        times = np.asarray(t["samples"], dtype=float)
        if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
            raise ValidationError("samples", "time.samples must be ascending and start at t >= 0")
    else:
        t_max = float(t.get("t_max", 10.0))
        n = t.get("n_samples", 401)
        if not t_max > 0 or not isinstance(n, int) or n < 2:
            raise ValidationError("time", "t_max must be positive and n_samples an integer >= 2")
        times = np.linspace(0.0, t_max, n)
    return RunSetup(spec, det, grid, times, integ, cfg)


def _generator(setup: RunSetup):
    if isinstance(setup.spec, ConstantWidthSpec):
        return constant_generator(setup.spec, setup.det, setup.grid)
    return lorentzian_generator(setup.spec, setup.det, setup.grid)


def _params_echo(setup: RunSetup) -> dict:
    return {
        "model": setup.spec.params(),
        "detector": setup.det.params(),
        "grid": setup.grid.params(),
        "time": {"t_max": float(setup.times[-1]), "n_samples": int(setup.times.size)},
    }


def _cmd_decay(setup, outdir):
    gen = _generator(setup)
    series = evolve(gen, t_samples=setup.times, cfg=setup.integ)
    s = survival_probability(series)
    trace = total_probability(series).values
    s.to_csv(outdir / "sigma00.csv", comments=[f"variant={gen.variant}", f"params_hash={gen.params_hash}"])
    summary = {
        "fitted_rate": fitted_rate(s.times, s.values),
        "trace_defect": float(np.abs(trace - 1.0).max()),
        "coarse_grid": gen.metadata.get("coarse_grid"),
        "variant": gen.variant,
    }
    if isinstance(setup.spec, LorentzianDosSpec):
        summary["regime"] = classify_regime(setup.spec, setup.det) if setup.spec.GammaBar == 0 else None
    return ["sigma00.csv"], summary, {}


def _spectrum_energies(setup):
    sec = _section(setup.raw, "spectrum")
    if sec:
        return np.linspace(float(sec["e_min"]), float(sec["e_max"]), int(sec.get("n", 2001)))
    return setup.grid.energies


def _cmd_spectrum(setup, outdir):
    energies = _spectrum_energies(setup)
    if isinstance(setup.spec, ConstantWidthSpec):
        spec_obj = constant_spectrum_scan(setup.spec, setup.det, energies)
    else:
        spec_obj = spectrum_scan(setup.spec, setup.det, energies)
    spec_obj.to_csv(outdir / "spectrum.csv")
    summary = {"integral": spec_obj.metadata["integral"], "peaks": _peak_summary(spec_obj)}
    try:
        summary["fwhm"] = fwhm(spec_obj)
    except SpectrumError as exc:
        summary["fwhm"] = str(exc)
    return ["spectrum.csv"], summary, {}


def _cmd_decaytime(setup, outdir):
    gen = _generator(setup)
    T = decay_time(gen)
    summary = {"decay_time": T, "variant": gen.variant}
    flags = {}
    if isinstance(setup.spec, LorentzianDosSpec) and setup.spec.GammaBar == 0.0:
        closed = analytic.measured_decay_time(setup.spec.Omega, setup.spec.eps01, setup.spec.Gamma1, setup.det.GammaD)
        block = time_integrated_block(setup.spec, setup.det).sbar00
        summary.update(decay_time_closed=closed, decay_time_block=block, regime=classify_regime(setup.spec, setup.det))
        flags["closed_form_agreement"] = bool(abs(T - closed) <= 1e-9 * closed and abs(block - closed) <= 1e-9 * closed)
    elif isinstance(setup.spec, ConstantWidthSpec) and setup.spec.Gamma0 > 0:
        summary["decay_time_closed"] = 1.0 / setup.spec.Gamma0
        flags["closed_form_agreement"] = bool(abs(T * setup.spec.Gamma0 - 1.0) <= 1e-9)
    _write_table(outdir / "decaytime.csv", ["decay_time"], [[T]], [f"variant={gen.variant}"])
    return ["decaytime.csv"], summary, flags


def _cmd_ladder(setup, outdir):
    sec = _section(setup.raw, "ladder")
    n_max = sec.get("n_max", 40)
    trunc = sec.get("truncation", "lumped")
    if isinstance(setup.spec, ConstantWidthSpec):
        gen = build_ladder_constant(setup.spec, setup.det, setup.grid, n_max, truncation=trunc)
    else:
        gen = build_ladder_lorentzian(setup.spec, setup.det, setup.grid, n_max, truncation=trunc)
    series = evolve(gen, t_samples=setup.times, cfg=setup.integ)
    cur = detector_current(series, setup.det)
    cur.to_csv(outdir / "current.csv", comments=[f"variant={gen.variant}", f"n_max={n_max}", f"truncation={trunc}"])
    pn = rung_populations(series)
    _write_table(outdir / "rungs.csv", ["t"] + [f"P{n}" for n in range(pn.shape[1])], [series.times, *pn.T])
    summary = {
        "final_current": float(cur.column("current")[-1]),
        "final_mean_n": float(cur.column("mean_n")[-1]),
        "top_rung_mass": float(pn[-1, -1]),
        "trace_defect": float(np.abs(pn.sum(axis=1) - 1.0).max()),
    }
    return ["current.csv", "rungs.csv"], summary, {}


def _cmd_validate(setup, outdir, quick=False):
    results = validation_suite(quick=quick)
    rows = sorted(results.items())
    with open(outdir / "validate.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("check,value,tolerance,passed\n")
        for name, (value, tol, ok) in rows:
            fh.write(f"{name},{value:.17g},{tol:.17g},{int(ok)}\n")
    summary = {name: value for name, (value, _, _) in rows}
    flags = {name: ok for name, (_, _, ok) in rows}
    return ["validate.csv"], summary, flags


_DISPATCH = {
    "decay": _cmd_decay,
    "spectrum": _cmd_spectrum,
    "decaytime": _cmd_decaytime,
    "ladder": _cmd_ladder,
    "validate": _cmd_validate,
}


def run_config(config_path, command: str, outdir, quick: bool = False) -> ExperimentReport:
    if command not in COMMANDS:
        raise ValidationError("cmd", f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    cfg = load_config(config_path)
    setup = parse_config(cfg)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if command == "validate":
        manifest, summary, flags = _cmd_validate(setup, outdir, quick=quick)
    else:
        manifest, summary, flags = _DISPATCH[command](setup, outdir)
    report = ExperimentReport(command, _params_echo(setup), manifest, summary, flags)
    report.write(outdir)
    return report


# --- validation suite ----------------------------------------------------------


def validation_suite(quick: bool = False) -> dict:
    """name -> (value, tolerance, passed).

    Compares the rate equations with the amplitude oracle and the two
    spectrum routes with each other.
    """
    out = {}

    def check(name, value, tol):
        out[name] = (float(value), float(tol), bool(value < tol))

    # Lorentzian rate equations vs amplitude oracle
    spec = _fig5_spec(0.0)
    width, n_modes = (400.0, 4000) if quick else (800.0, 8000)
    times = np.linspace(0.0, 10.0, 201)
    amp = oracle.evolve_amplitudes_lorentzian(spec, ReservoirGrid.centered(0.0, width, n_modes), times)
    rate = survival_probability(evolve(lorentzian_generator(spec, NO_DETECTOR), t_samples=times))
    check("oracle_lorentzian", oracle.compare(rate, amp.to_timeseries()).max_abs, 1e-3)

    if not quick:
        # the flat band needs a wide window: the truncation error scales like Gamma0/window
        cspec = ConstantWidthSpec(0.0, 1.0)
        t = np.linspace(0.2, 5.0, 97)
        camp = oracle.evolve_amplitudes_constant(cspec, ReservoirGrid.centered(0.0, 1600.0, 6400), t)
        cgen = build_unmeasured_constant(cspec, ReservoirGrid.centered(0.0, 40.0, 16))
        crate = survival_probability(evolve(cgen, t_samples=t))
        check("oracle_constant", oracle.compare(crate, camp.to_timeseries()).max_abs, 1e-3)

    # dual-route spectrum
    fig8 = LorentzianDosSpec(E0=0.0, E1=5.0, Omega=1.0, Gamma1=0.5)
    E = np.linspace(-10.0, 15.0, 101)
    a = spectral_density(fig8, NO_DETECTOR, E)
    b = unmeasured_spectrum_closed(fig8, E)
    check("dual_route_spectrum", np.abs(a - b).max(), 1e-10)

    # aligned closed form
    for gd in (0.0, 10.0):
        sp_ = LorentzianDosSpec(0.0, 0.0, 1.0, 10.0)
        E = np.linspace(-20.0, 20.0, 101)
        a = spectral_density(sp_, DetectorSpec.from_gamma_d(gd), E)
        b = analytic.measured_spectrum_aligned(1.0, 10.0, gd, E)
        check(f"aligned_spectrum_Gd{gd:g}", np.abs(a - b).max(), 1e-10)

    # decay-time table via both linear-solve routes
    for eps in (0.0, 10.0):
        for gd in (0.0, 10.0):
            sp_ = _fig5_spec(eps)
            det = DetectorSpec.from_gamma_d(gd)
            closed = analytic.measured_decay_time(1.0, -eps, 10.0, gd)
            dev = max(abs(decay_time(lorentzian_generator(sp_, det)) - closed),
                      abs(time_integrated_block(sp_, det).sbar00 - closed)) / closed
            check(f"decay_time_eps{eps:g}_Gd{gd:g}", dev, 1e-9)
    return out


# --- entry point ---------------------------------------------------------------


def _parse_params(pairs):
    params = {}
    for item in pairs or []:
        if "=" not in item:
            raise ValidationError("params", f"expected k=v, got {item!r}")
        k, v = item.split("=", 1)
        try:
            vals = [float(x) for x in v.split(",")]
        except ValueError:
            raise ValidationError(k, f"{k} must be a number or comma-separated numbers") from None
        params[k] = np.array(vals) if len(vals) > 1 else vals[0]
    return params


def run_analytic(name: str, params: dict):
    if name not in analytic.REGISTRY:
        raise ValidationError("name", f"unknown closed form {name!r}; choose from {', '.join(sorted(analytic.REGISTRY))}")
    func, argnames = analytic.REGISTRY[name]
    extra = set(params) - set(argnames)
    if extra:
        raise ValidationError(sorted(extra)[0], f"unexpected parameter {sorted(extra)[0]}")
    optional = {"GammaBar"}
    missing = [a for a in argnames if a not in params and a not in optional]
    if missing:
        raise ValidationError(missing[0], f"missing parameter {missing[0]}")
    result = func(**params)
    return np.asarray(result).tolist()


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zenodyn", description="Continuously monitored quantum-dot decay.")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("figure", help="reproduce the data behind a figure")
    f.add_argument("id", choices=FIGURES)
    f.add_argument("--out", required=True, type=Path)

    r = sub.add_parser("run", help="run one command on a JSON config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--cmd", required=True, choices=COMMANDS)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--quick", action="store_true", help="smaller oracle grids for --cmd validate")

    a = sub.add_parser("analytic", help="evaluate a closed-form expression")
    a.add_argument("name")
    a.add_argument("--params", nargs="*", default=[], metavar="k=v")

    v = sub.add_parser("validate", help="rate equations vs oracle and spectrum cross-checks")
    v.add_argument("--quick", action="store_true")
    v.add_argument("--out", type=Path, default=None)
    return p


def _print_report(report: ExperimentReport):
    for name, ok in sorted(report.flags.items()):
        print(f"{name}: {'pass' if ok else 'FAIL'}")
    print(f"report: {report.experiment} ({'passed' if report.passed else 'failed'})")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        thread_count()
        if args.command == "figure":
            report = run_figure(args.id, args.out)
            _print_report(report)
            return EXIT_OK
        if args.command == "run":
            report = run_config(args.config, args.cmd, args.out, quick=args.quick)
            _print_report(report)
            if args.cmd == "validate" and not report.passed:
                return EXIT_CHECK
            return EXIT_OK
        if args.command == "analytic":
            print(json.dumps(run_analytic(args.name, _parse_params(args.params))))
            return EXIT_OK
        results = validation_suite(quick=args.quick)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / "validate.json").write_text(
                json.dumps(_jsonable({k: list(v) for k, v in results.items()}), indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
        failed = False
        for name, (value, tol, ok) in sorted(results.items()):
            print(f"{name}: {'pass' if ok else 'FAIL'} (value={value:.3g}, tol={tol:.1g})")
            failed |= not ok
        return EXIT_CHECK if failed else EXIT_OK
    except (ValidationError, ConfigError, UnsupportedVariantError, oracle.RecurrenceError) as exc:
        field_name = getattr(exc, "field", None)
        print(f"error: {exc}" + (f" [{field_name}]" if field_name else ""), file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, SpectrumError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
