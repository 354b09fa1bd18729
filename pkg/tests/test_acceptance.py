"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines are
written to the terminal even when output capture is on.
"""
import time

import numpy as np
import pytest

from zenodyn import analytic, cli
from zenodyn.dynamics import decay_time, evolve, survival_probability, total_probability
from zenodyn.generator import (
    build_ladder_constant,
    build_ladder_lorentzian,
    build_measured_constant,
    build_measured_lorentzian,
    build_unmeasured_lorentzian,
    collapse_rung,
)
from zenodyn.model import NO_DETECTOR, ConstantWidthSpec, DetectorSpec, LorentzianDosSpec, ReservoirGrid
from zenodyn.oracle import compare, evolve_amplitudes_constant, evolve_amplitudes_lorentzian
from zenodyn.spectrum import (
    constant_spectrum_scan,
    find_peaks_list,
    fwhm,
    Spectrum,
    spectral_density,
    spectrum_scan,
    time_integrated_block,
    unmeasured_spectrum_closed,
)

RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary_lines(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    write = reporter.write_line if reporter is not None else print
    write("")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        write(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def record(k, ok, detail):
    RESULTS[k] = (bool(ok), detail)
    assert ok, detail


def fig5_spec(eps10):
    return LorentzianDosSpec(E0=0.0, E1=eps10, Omega=1.0, Gamma1=10.0)


def small_grid(spec):
    return ReservoirGrid.centered(0.5 * (spec.E0 + spec.E1), 40.0 * spec.Gamma1, 8)


def lorentzian_gen(spec, gd, grid=None):
    grid = grid or small_grid(spec)
    if gd == 0:
        return build_unmeasured_lorentzian(spec, grid)
    return build_measured_lorentzian(spec, DetectorSpec.from_gamma_d(gd), grid)


def test_criterion_1_exponential_invariance():
    start = time.perf_counter()
    spec = ConstantWidthSpec(E0=0.0, Gamma0=1.0)
    grid = ReservoirGrid.centered(0.0, 40.0, 40)
    t = np.linspace(0.0, 10.0, 501)
    worst = 0.0
    for gd in (0.0, 1.0, 10.0):
        gen = build_measured_constant(spec, DetectorSpec.from_gamma_d(gd), grid)
        s = survival_probability(evolve(gen, t_samples=t)).values
        worst = max(worst, float(np.max(np.abs(s - np.exp(-t)))))
    elapsed = time.perf_counter() - start
    record(1, worst < 1e-9 and elapsed < 1.0, f"sup|sigma00 - exp(-t)| = {worst:.2e} (< 1e-9), {elapsed:.2f}s (< 1s)")


def test_criterion_2_line_broadening():
    start = time.perf_counter()
    E = np.linspace(-60.0, 60.0, 24001)
    devs = []
    for g0, gd in ((1.0, 0.0), (1.0, 3.0), (1.0, 10.0)):
        spec = ConstantWidthSpec(0.0, g0)
        det = DetectorSpec.from_gamma_d(gd)
        closed = fwhm(constant_spectrum_scan(spec, det, E))
        # same line from the rate equations: late-time mode populations per unit energy
        grid = ReservoirGrid.centered(0.0, 40.0 * (g0 + gd), 801)
        gen = build_measured_constant(spec, det, grid)
        final = evolve(gen, t_samples=np.array([0.0, 25.0 / g0])).values[-1]
        line = Spectrum(grid.energies, final[gen.layout.indices("saa")] / grid.delta)
        devs.append(max(abs(closed / (g0 + gd) - 1), abs(fwhm(line) / (g0 + gd) - 1)))
    elapsed = time.perf_counter() - start
    worst = max(devs)
    record(2, worst < 0.01 and elapsed < 1.0, f"max |FWHM/(G0+Gd) - 1| = {worst:.2e} (< 1%), {elapsed:.2f}s (< 1s)")


def test_criterion_3_decay_time_table():
    start = time.perf_counter()
    table = {(0.0, 0.0): 2.6, (0.0, 10.0): 5.1, (10.0, 0.0): 12.6, (10.0, 10.0): 10.1}
    worst = 0.0
    for (eps, gd), expected in table.items():
        spec = fig5_spec(eps)
        T_solve = decay_time(lorentzian_gen(spec, gd))
        T_block = time_integrated_block(spec, DetectorSpec.from_gamma_d(gd)).sbar00
        T_closed = analytic.measured_decay_time(1.0, spec.eps01, 10.0, gd)
        for v in (T_solve, T_block, T_closed):
            worst = max(worst, abs(v - expected) / expected)
    elapsed = time.perf_counter() - start
    record(3, worst < 1e-9 and elapsed < 1.0, f"max rel dev from (2.6, 5.1, 12.6, 10.1) = {worst:.1e}, {elapsed:.2f}s")


def test_criterion_4_zeno_orderings(tmp_path):
    start = time.perf_counter()
    flags = {}
    for fid in ("fig5a", "fig5b", "fig6"):
        flags.update({f"{fid}.{k}": v for k, v in cli.run_figure(fid, tmp_path / fid).flags.items()})
    elapsed = time.perf_counter() - start
    ok = all(flags.values()) and elapsed < 10.0
    detail = ", ".join(f"{k}={v}" for k, v in sorted(flags.items()))
    record(4, ok, f"{detail}, {elapsed:.1f}s (< 10s)")


def test_criterion_5_peak_swap():
    start = time.perf_counter()
    spec = LorentzianDosSpec(E0=0.0, E1=5.0, Omega=1.0, Gamma1=0.5)
    E = np.linspace(-10.0, 15.0, 25001)
    dens = [spectrum_scan(spec, DetectorSpec.from_gamma_d(gd), E).density for gd in (0.0, 0.5, 10.0)]
    flags = cli.peak_swap_flags(E, dens, spec.E0, spec.E1)
    peaks_mid = find_peaks_list(Spectrum(E, dens[1]))
    elapsed = time.perf_counter() - start
    ok = flags["peak_swap"] and flags["two_peaks_mid"] and elapsed < 5.0
    heights = ", ".join(f"{p.height:.4f}@{p.energy:.3f}" for p in peaks_mid[:2])
    record(5, ok, f"dominant E0 -> E1: {flags['peak_swap']}; Gd=0.5 peaks {heights}; {elapsed:.2f}s (< 5s)")


def _t2_coefficient(t, deficit):
    # 1 - sigma00 = c2 t^2 + c3 t^3 + ...; the t^3 term (rate ~ (G1 + Gd)/3) is
    # far from negligible at t = 0.05, so higher orders are fitted alongside.
    basis = np.column_stack([t, t**2, t**3, t**4])
    return np.linalg.lstsq(basis, deficit, rcond=None)[0][1]


def test_criterion_6_short_time_law():
    t = np.linspace(0.0, 0.05, 101)
    coefs = {}
    for eps in (0.0, 10.0):
        spec = fig5_spec(eps)
        for gd in (0.0, 10.0):
            s = survival_probability(evolve(lorentzian_gen(spec, gd), t_samples=t)).values
            coefs[f"rate eps={eps:g} Gd={gd:g}"] = _t2_coefficient(t, 1.0 - s)
        amp = evolve_amplitudes_lorentzian(spec, ReservoirGrid.centered(eps / 2, 4000.0, 2000), t)
        coefs[f"oracle eps={eps:g}"] = _t2_coefficient(t, 1.0 - amp.survival())
    worst = max(abs(c - 1.0) for c in coefs.values())
    record(6, worst < 0.01, f"max |c2/Omega^2 - 1| = {worst:.2e} (< 1%) over {len(coefs)} runs")


def test_criterion_7_oracle_equivalence():
    start = time.perf_counter()
    t = np.linspace(0.2, 5.0, 97)
    camp = evolve_amplitudes_constant(ConstantWidthSpec(0.0, 1.0), ReservoirGrid.centered(0.0, 40.0, 2000), t)
    c_dev = float(np.max(np.abs(camp.survival() - np.exp(-t))))

    spec = fig5_spec(0.0)
    grid = ReservoirGrid.centered(0.0, 800.0, 8000)
    horizon = 0.5 * grid.recurrence_time
    tl = np.linspace(0.0, min(10.0, 0.99 * horizon), 201)
    lamp = evolve_amplitudes_lorentzian(spec, grid, tl)
    closed = analytic.survival_two_level(1.0, 0.0, 10.0, tl)
    l_dev = float(np.max(np.abs(lamp.survival() - closed)))
    rate = survival_probability(evolve(lorentzian_gen(spec, 0.0), t_samples=tl))
    r_dev = compare(rate, lamp.to_timeseries()).max_abs
    elapsed = time.perf_counter() - start
    ok = c_dev < 1e-3 and l_dev < 1e-3 and r_dev < 1e-3 and elapsed < 60.0
    record(
        7,
        ok,
        f"constant |b0|^2 vs exp(-t): {c_dev:.2e}; Lorentzian vs closed form: {l_dev:.2e}; "
        f"vs rate eqs: {r_dev:.2e} (each < 1e-3); {elapsed:.1f}s (< 60s)",
    )


def test_criterion_8_structural_identities():
    checks = {}
    grid = ReservoirGrid.centered(1.0, 400.0, 16)
    det = DetectorSpec(4.0, 1.0)

    # ladder trace: every rung's columns, summed over n, equal the traced generator
    cspec = ConstantWidthSpec(0.3, 1.0)
    lad = build_ladder_constant(cspec, det, grid, 5)
    tr = build_measured_constant(cspec, det, grid).matrix()
    lspec = LorentzianDosSpec(0.0, 2.0, 1.0, 10.0)
    llad = build_ladder_lorentzian(lspec, det, grid, 5)
    ltr = build_measured_lorentzian(lspec, det, grid).matrix()
    diff = max(
        max(abs(collapse_rung(lad, n) - tr).max() for n in range(6)),
        max(abs(collapse_rung(llad, n) - ltr).max() for n in range(6)),
    )
    checks["ladder trace"] = (diff, 1e-12)

    E = np.linspace(-10.0, 15.0, 101)
    fig8 = LorentzianDosSpec(0.0, 5.0, 1.0, 0.5)
    checks["dual route"] = (np.max(np.abs(spectral_density(fig8, NO_DETECTOR, E) - unmeasured_spectrum_closed(fig8, E))), 1e-10)

    flux = im01 = 0.0
    for eps in (0.0, 10.0, -3.0):
        for gd in (0.0, 0.5, 10.0):
            sp_ = LorentzianDosSpec(0.0, eps, 1.3, 0.7)
            blk = time_integrated_block(sp_, DetectorSpec.from_gamma_d(gd))
            flux = max(flux, abs(sp_.Gamma1 * blk.sbar11 - 1.0))
            im01 = max(im01, abs(blk.sbar01.imag - 1.0 / (2.0 * sp_.Omega)))
    checks["flux G1*sbar11=1"] = (flux, 1e-12)
    checks["Im sbar01=1/2Omega"] = (im01, 1e-12)

    # trace conservation: ladder total equals traced total (exact identity) ...
    t = np.linspace(0.0, 2.0, 9)
    lad_tot = total_probability(evolve(build_ladder_lorentzian(lspec, det, grid, 40), t_samples=t)).values
    tr_tot = total_probability(evolve(build_measured_lorentzian(lspec, det, grid), t_samples=t)).values
    checks["ladder total = traced total"] = (np.max(np.abs(lad_tot - tr_tot)), 1e-8)

    # ... and the constant-width grid caveat at dE = G0/40, window 40 G0
    cgrid = ReservoirGrid.centered(0.0, 40.0, 1600)
    ctot = total_probability(
        evolve(build_measured_constant(ConstantWidthSpec(0.0, 1.0), NO_DETECTOR, cgrid), t_samples=np.linspace(0, 10, 21))
    ).values
    checks["constant grid trace defect"] = (np.max(np.abs(ctot - 1.0)), 1e-3)

    ok = all(v < tol for v, tol in checks.values())
    detail = "; ".join(f"{k} {v:.1e}{'<' if v < tol else '>='}{tol:.0e}" for k, (v, tol) in checks.items())
    record(8, ok, detail)


def test_criterion_9_aligned_spectrum():
    E = np.linspace(-20.0, 20.0, 101)
    dev = 0.0
    for g1, gd in ((10.0, 0.0), (10.0, 10.0)):
        got = spectral_density(LorentzianDosSpec(0.0, 0.0, 1.0, g1), DetectorSpec.from_gamma_d(gd), E)
        dev = max(dev, float(np.max(np.abs(got - analytic.measured_spectrum_aligned(1.0, g1, gd, E)))))
    g1 = 50.0
    El = np.linspace(-10.0 / g1, 10.0 / g1, 101)
    exact = spectral_density(LorentzianDosSpec(0.0, 0.0, 1.0, g1), NO_DETECTOR, El)
    lim = analytic.occ_limit_lorentzian(1.0, g1, 0.0, El)
    ldev = float(np.max(np.abs(exact / lim - 1.0)))
    record(9, dev < 1e-10 and ldev < 0.05, f"solver vs aligned closed form {dev:.1e} (< 1e-10); G1=50 vs Lorentzian limit {ldev:.2%} (< 5%)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
