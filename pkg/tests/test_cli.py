import csv
import math
import subprocess
import sys

import pytest
import yaml

from hybrid_blockade.cli import (
    BUNDLED,
    EXIT_IO,
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    ValidationError,
    evaluate,
    list_scenarios,
    load_scenario,
    main,
    parse_scenario,
    resolve_params,
    run_scenario,
    validate_scenario,
)

BASE = """\
name: custom
params:
  Delta: 0
  eta: 15
  eta_a: 40/sqrt(2)
  G_m: 800
  Omega_e: 0.1
  kappa: {kappa}
  kappa_b: 0.05
solver:
  truncation: 3
panels:
  - name: scan
    sweep:
      - {{name: Delta, start: -5, stop: 5, points: 3}}
    observables:
{observables}
"""


def config(kappa=1, observables="      g2: [a_plus]"):
    return BASE.format(kappa=kappa, observables=observables)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_list_has_figures_and_smoke(capsys):
    names = [n for n, _ in list_scenarios()]
    assert names == ["fig2", "fig3", "fig4", "fig5", "fig6", "fig_add", "smoke"]
    assert main(["list"]) == EXIT_OK
    assert len(capsys.readouterr().out.strip().splitlines()) == 7


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_validate(name):
    assert validate_scenario(name) == []


R2 = math.sqrt(2)
CAPTIONS = {
    "fig2": dict(eta=5, eta_a=6 / R2, G_m=200, Omega_e=0.1),
    "fig3": dict(eta=15, eta_a=40 / R2, G_m=800, Omega_e=0.1, kappa_b=0.05, n_th=0),
    "fig4": dict(eta=15, eta_a=40 / R2, G_m=800, Omega_e=0.1, kappa_b=0.05, n_th=0),
    "fig5": dict(eta=15, eta_a=40 / R2, G_m=800, Omega_e=0.1, kappa_b=0.05, n_th=0, Delta=math.sqrt(1025)),
    "fig6": dict(eta=15, G_m=800, Omega_e=0.1, kappa_b=0.05, n_th=0),
    "fig_add": dict(eta=0.2, eta_a=20 / R2, G_m=800, Omega_e=0.8, kappa_b=1, n_th=0),
}


@pytest.mark.parametrize("name", sorted(CAPTIONS))
def test_bundled_parameters_match_captions(name):
    resolved = resolve_params(load_scenario(name).params)
    for key, value in CAPTIONS[name].items():
        assert resolved[key] == value, key
    assert resolved["kappa"] == 1


def test_fig6_cut_couplings():
    cuts = next(p for p in load_scenario("fig6").panels if p.name == "cuts")
    values = [evaluate(v) for v in cuts.sweep[0].values]
    assert values == [40 / R2, 17.7, 0.5]


def test_negative_kappa_names_field():
    with pytest.raises(ValidationError) as info:
        parse_scenario(config(kappa=-1))
    assert info.value.field == "params.kappa"
    assert info.value.line == 8


def test_analytic_phonon_correlator_rejected():
    with pytest.raises(ValidationError, match="numeric-only"):
        parse_scenario(config(observables="      g2_analytic: [b]"))


@pytest.mark.parametrize("observables,needle", [
    ("      g2: [c]", "g2"),
    ("      yN: [a]", "yN"),
    ("      colour: [a]", "colour"),
])
def test_unknown_observables_rejected(observables, needle):
    with pytest.raises(ValidationError, match=needle):
        parse_scenario(config(observables=observables))


def test_unordered_range_rejected():
    text = config().replace("start: -5, stop: 5", "start: 5, stop: -5")
    with pytest.raises(ValidationError, match="sweep"):
        parse_scenario(text)


def test_single_point_axis_rejected_for_two_point_minimum():
    text = config().replace("points: 3", "points: 0")
    with pytest.raises(ValidationError):
        parse_scenario(text)


def test_expression_evaluator():
    assert evaluate("40/sqrt(2)") == pytest.approx(28.284271247461902)
    assert evaluate("2*pi") == pytest.approx(2 * math.pi)
    assert evaluate("beta_1 + 1", {"beta_1": 2.0}) == 3.0
    for bad in ("__import__('os')", "x", "open('f')", "[1]"):
        with pytest.raises(ValueError):
            evaluate(bad)


def test_validate_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.yaml"
    good.write_text(config())
    bad = tmp_path / "bad.yaml"
    bad.write_text(config(kappa=-2))
    assert main(["validate", str(good)]) == EXIT_OK
    assert main(["validate", str(bad)]) == EXIT_VALIDATION
    assert "params.kappa" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_smoke_run_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "smoke", "--out", str(a)]) == EXIT_OK
    assert main(["run", "smoke", "--out", str(b), "--threads", "2"]) == EXIT_OK
    for f in ("scan.csv", "delay.csv", "manifest.yaml", "plot_scan.py", "plot_delay.py"):
        assert (a / "smoke" / f).read_bytes() == (b / "smoke" / f).read_bytes(), f
    rows = read_csv(a / "smoke" / "scan.csv")
    assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)
    assert float(rows[2]["g2_a"]) == pytest.approx(float(rows[2]["g2_m"]), abs=1e-8)
    raw = (a / "smoke" / "scan.csv").read_bytes()
    assert raw.count(b"\r\n") == 4
    man = yaml.safe_load((a / "smoke" / "manifest.yaml").read_text())
    assert man["resolved_params"]["eta"] == 15
    assert set(man["solver"]["truncation"].values()) == {4}


def test_degenerate_scenario_gives_vacuum(tmp_path):
    text = """\
name: empty
params: {Delta: 0, eta: 0, eta_a: 0, G_m: 800, Omega_e: 0, kappa_b: 1}
solver: {truncation: 3}
panels:
  - name: point
    observables:
      g2: [a_plus, b]
      occupation: [a_plus, a_minus, b]
"""
    path = tmp_path / "empty.yaml"
    path.write_text(text)
    assert main(["run", str(path), "--out", str(tmp_path)]) == EXIT_OK
    (row,) = read_csv(tmp_path / "empty" / "point.csv")
    assert float(row["n_a_plus"]) == pytest.approx(0, abs=1e-14)
    assert float(row["n_b"]) == pytest.approx(0, abs=1e-14)
    assert math.isnan(float(row["g2_a_plus"]))
    assert "undefined" in row["flags"]


def test_solver_failure_marks_cell(tmp_path):
    # no phonon damping: the stationary state is not unique
    text = """\
name: broken
params: {Delta: 0, eta: 15, eta_a: 1, G_m: 800, Omega_e: 0, kappa_b: 0}
solver: {truncation: 3}
panels:
  - name: point
    observables:
      occupation: [a_plus]
"""
    path = tmp_path / "broken.yaml"
    path.write_text(text)
    assert main(["run", str(path), "--out", str(tmp_path)]) == EXIT_SOLVER
    (row,) = read_csv(tmp_path / "broken" / "point.csv")
    assert row["status"] == "failed" and row["error"]


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "smoke", "--out", str(blocker)]) == EXIT_IO


def test_fig2_panel_agrees_in_single_excitation(tmp_path):
    target, outputs = run_scenario(load_scenario("fig2"), tmp_path)
    rows = read_csv(target / "populations.csv")
    full = [float(r["P_g100_full"]) for r in rows]
    eff = [float(r["P_g100_eff"]) for r in rows]
    assert max(abs(x - y) for x, y in zip(full, eff)) <= 0.05 * max(full)


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hybrid_blockade", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and "fig3" in out.stdout
