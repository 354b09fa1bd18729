import json
import math

import numpy as np
import pytest

from zenodyn import cli
from zenodyn.model import DetectorSpec, LorentzianDosSpec, ValidationError


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


@pytest.fixture(scope="module")
def figures(tmp_path_factory):
    root = tmp_path_factory.mktemp("figs")
    return root, {fid: cli.run_figure(fid, root / fid) for fid in cli.FIGURES}


@pytest.mark.parametrize("fid", cli.FIGURES)
def test_figure_reports(figures, fid):
    root, reports = figures
    rep = reports[fid]
    assert rep.flags and rep.passed, rep.flags
    for name in rep.manifest:
        assert (root / fid / name).is_file()
    data = json.loads((root / fid / "report.json").read_text())
    assert data["passed"] is True
    assert data["experiment"] == fid


def test_fig5_flags_recomputable(figures):
    root, reports = figures
    f5a = cli.fig5_flags_from_csv("fig5a", root / "fig5a" / "fig5a.csv")
    assert f5a["zeno"] == reports["fig5a"].flags["zeno_ordering"]
    f5b = cli.fig5_flags_from_csv("fig5b", root / "fig5b" / "fig5b.csv")
    assert f5b["antizeno"] and f5b["reversal"]
    f6 = cli.fig5_flags_from_csv("fig6", root / "fig6" / "fig6.csv")
    assert f6["reversal"] == reports["fig6"].flags["short_time_reversal"]


def test_fig8_flags_recomputable(figures):
    root, reports = figures
    header, d = cli.read_table(root / "fig8" / "fig8.csv")
    assert header == ["E_alpha", "P_Gd0", "P_Gd0.5", "P_Gd10"]
    flags = cli.peak_swap_flags(d[:, 0], [d[:, 1], d[:, 2], d[:, 3]], 0.0, 5.0)
    assert flags == reports["fig8"].flags


def test_fig5_csv_format(figures):
    root, _ = figures
    raw = (root / "fig5a" / "fig5a.csv").read_bytes()
    assert b"\r" not in raw
    lines = raw.decode("utf-8").splitlines()
    assert lines[0].startswith("# ")
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header.startswith("t,sigma00_Gd0,sigma00_Gd10")
    _, d = cli.read_table(root / "fig5a" / "fig5a.csv")
    assert d.shape == (cli.FIG5_SAMPLES, 5)
    assert d[-1, 0] == cli.FIG5_T_MAX
    gp = (root / "fig5a" / "fig5a.gp").read_text()
    assert "set logscale y" in gp and "fig5a.csv" in gp


def test_figure_determinism_across_threads(tmp_path, monkeypatch):
    monkeypatch.setenv("ZENODYN_THREADS", "1")
    cli.run_figure("fig8", tmp_path / "a")
    monkeypatch.setenv("ZENODYN_THREADS", "3")
    cli.run_figure("fig8", tmp_path / "b")
    for name in ("fig8.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_figure():
    with pytest.raises(ValidationError):
        cli.run_figure("fig9", "/tmp/never")
    with pytest.raises(SystemExit) as err:
        cli.main(["figure", "fig9", "--out", "/tmp/never"])
    assert err.value.code == 2


@pytest.mark.parametrize(
    "eps10, gd, regime", [(0.0, 10.0, "zeno"), (10.0, 10.0, "anti-zeno"), (10.0, 0.0, "neutral"), (0.0, 0.0, "neutral")]
)
def test_classify_regime(eps10, gd, regime):
    spec = LorentzianDosSpec(0.0, eps10, 1.0, 10.0)
    assert cli.classify_regime(spec, DetectorSpec.from_gamma_d(gd)) == regime


def test_run_decay_constant(tmp_path):
    cfg = _write(
        tmp_path,
        "c.json",
        {
            "model": {"kind": "constant", "E0": 0, "Gamma0": 1},
            "detector": {"D": 4, "Dprime": 1},
            "time": {"samples": [0, math.log(2), 1.0]},
        },
    )
    assert cli.main(["run", "--config", str(cfg), "--cmd", "decay", "--out", str(tmp_path / "o")]) == 0
    header, d = cli.read_table(tmp_path / "o" / "sigma00.csv")
    assert header == ["t", "sigma00"]
    assert d[1, 0] == math.log(2)
    assert d[1, 1] == pytest.approx(0.5, abs=1e-9)
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["manifest"] == ["sigma00.csv"]


@pytest.mark.parametrize("cmd", ["decay", "spectrum", "decaytime", "ladder"])
@pytest.mark.parametrize("kind", ["constant", "lorentzian"])
def test_run_commands(tmp_path, cmd, kind):
    model = (
        {"kind": "constant", "E0": 0, "Gamma0": 1}
        if kind == "constant"
        else {"kind": "lorentzian", "E0": 0, "E1": 10, "Omega": 1, "Gamma1": 10}
    )
    cfg = _write(
        tmp_path,
        "c.json",
        {"model": model, "detector": {"D": 10, "Dprime": 0}, "time": {"t_max": 2, "n_samples": 11}, "ladder": {"n_max": 30}},
    )
    rep = cli.run_config(cfg, cmd, tmp_path / "o")
    assert rep.passed
    for name in rep.manifest:
        assert (tmp_path / "o" / name).is_file()
    if cmd == "decaytime":
        expected = 1.0 if kind == "constant" else 10.1
        assert rep.summary["decay_time"] == pytest.approx(expected, rel=1e-9)


def test_malformed_json(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.json", '{"model": {"kind": "constant",\n "E0": 0 "Gamma0": 1}}')
    assert cli.main(["run", "--config", str(cfg), "--cmd", "decay", "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


@pytest.mark.parametrize(
    "cfg",
    [
        {"model": {"kind": "lorentzian", "E0": 0, "E1": 0, "Omega": 1, "Gamma1": -1}},
        {"model": {"kind": "constant", "E0": 0, "Gamma0": 1}, "extra": 1},
        {"model": {"kind": "constant", "E0": 0, "Gamma0": 1}, "detector": {"D": -1}},
        {"model": {"kind": "constant", "E0": 0, "Gamma0": 1}, "grid": {"e_min": 1, "e_max": 0, "n_modes": 4}},
        {"detector": {}},
        [1, 2],
    ],
)
def test_schema_violations_exit_2(tmp_path, cfg):
    p = _write(tmp_path, "c.json", cfg)
    assert cli.main(["run", "--config", str(p), "--cmd", "decay", "--out", str(tmp_path / "o")]) == 2


def test_numerical_failure_exit_3(tmp_path):
    p = _write(tmp_path, "c.json", {"model": {"kind": "constant", "E0": 0, "Gamma0": 0}})
    assert cli.main(["run", "--config", str(p), "--cmd", "decaytime", "--out", str(tmp_path / "o")]) == 3


def test_validate_quick_passes(tmp_path):
    assert cli.main(["validate", "--quick", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "validate.json").read_text())
    assert all(v[2] for v in data.values())


def test_run_validate_quick(tmp_path):
    p = _write(tmp_path, "c.json", {"model": {"kind": "constant", "E0": 0, "Gamma0": 1}})
    assert cli.main(["run", "--config", str(p), "--cmd", "validate", "--out", str(tmp_path / "o"), "--quick"]) == 0


def test_validate_failure_exit_4(monkeypatch):
    monkeypatch.setattr(cli, "validation_suite", lambda quick=False: {"x": (1.0, 0.5, False)})
    assert cli.main(["validate"]) == 4


def test_analytic_command(capsys):
    assert cli.main(["analytic", "decay_time_closed", "--params", "Omega=1", "eps10=10", "Gamma1=10"]) == 0
    assert json.loads(capsys.readouterr().out) == pytest.approx(12.6)
    assert cli.main(["analytic", "survival_constant", "--params", "Gamma0=1", "t=0,0.6931471805599453"]) == 0
    assert json.loads(capsys.readouterr().out) == pytest.approx([1.0, 0.5])


@pytest.mark.parametrize(
    "argv",
    [
        ["analytic", "nope"],
        ["analytic", "survival_constant", "--params", "Gamma0=1"],
        ["analytic", "survival_constant", "--params", "Gamma0=x", "t=1"],
        ["analytic", "survival_constant", "--params", "Gamma0"],
        ["analytic", "survival_constant", "--params", "Gamma0=1", "t=1", "zz=2"],
    ],
)
def test_analytic_bad_input(argv):
    assert cli.main(argv) == 2


def test_threads_env_validated(monkeypatch):
    monkeypatch.setenv("ZENODYN_THREADS", "zero")
    assert cli.main(["analytic", "survival_constant", "--params", "Gamma0=1", "t=1"]) == 2


def test_fitted_rate():
    t = np.linspace(0, 10, 101)
    assert cli.fitted_rate(t, np.exp(-0.3 * t)) == pytest.approx(0.3, rel=1e-10)
