import json

import numpy as np
import pytest

import switchld.verify as verify
from conftest import grid
from switchld.modelspec import load_model
from switchld.reports import CheckReport, dump_reports
from switchld.verify import (
    check_containment,
    check_convexity_refinement,
    check_h_zero,
    fig2_experiment,
    lln_experiment,
    run_check_suite,
)


def _assert_all_pass(reports):
    failed = [r.line() for r in reports if not r.passed]
    assert not failed, "\n".join(failed)


def test_free_model_full_suite(free):
    reports = run_check_suite(free, grid(free, 64), "all")
    _assert_all_pass(reports)
    names = {r.name for r in reports}
    assert {"H(x,0)=0", "convexity in p", "containment function log(1+|x|^2)/2"} <= names


def test_gradient_hamiltonian_suite(gradient):
    reports = run_check_suite(gradient, grid(gradient, 64), "hamiltonian")
    _assert_all_pass(reports)
    coercive = next(r for r in reports if r.name.startswith("coercivity"))
    assert coercive.context["G"] == pytest.approx(1.05)


@pytest.mark.slow
def test_fig2_full_suite(fig2):
    _assert_all_pass(run_check_suite(fig2, grid(fig2, 128), "all"))


def test_suite_is_deterministic(fig2):
    g = grid(fig2, 64)
    a = run_check_suite(fig2, g, "measure", seed=4)
    b = run_check_suite(fig2, g, "measure", seed=4)
    assert a == b
    assert dump_reports(a) == dump_reports(b)


def test_unknown_suite(free):
    with pytest.raises(ValueError):
        run_check_suite(free, grid(free, 64), "everything")


def test_failure_names_property_and_witness(free, monkeypatch):
    monkeypatch.setattr(verify, "hamiltonian", lambda m, g, x, p: 0.0 if np.all(np.asarray(x) < 2) else 1e-3)
    rep = check_h_zero(free, grid(free, 64))
    assert not rep.passed
    assert rep.name == "H(x,0)=0"
    assert rep.context["witness"] == {"x": [2.0]}
    assert "x=[2.0]" in rep.message


def test_numerical_errors_become_failed_reports(fig2, monkeypatch):
    monkeypatch.setattr(verify, "check_convexity_refinement", lambda model, **kw: CheckReport("refinement", True, None, None))
    reports = run_check_suite(fig2, grid(fig2, 8), "hamiltonian")
    failed = {r.name: r.message for r in reports if not r.passed}
    assert "coercivity" in failed and failed["coercivity"].startswith("GridError")


def test_convexity_refinement_trend(fig2):
    rep = check_convexity_refinement(fig2, count=20)
    assert rep.passed
    defects = list(rep.measured.values())
    assert defects == sorted(defects, reverse=True)


def test_containment_free_model(free):
    rep = check_containment(free)
    assert rep.passed
    assert rep.measured == pytest.approx(1 / 8, abs=1e-6)


def test_containment_gradient_model(gradient):
    rep = check_containment(gradient)
    assert rep.passed
    assert np.isfinite(rep.measured) and rep.measured <= 1 / 8 + 1 + 1e-6


def test_containment_fig2(fig2):
    rep = check_containment(fig2)
    assert rep.passed and np.isfinite(rep.measured)


def test_containment_detects_superlinear_drift():
    m = load_model({"name": "cubic", "dimension": 1, "states": 1, "period": 1, "potential": ["-x^3"], "rates": [["0"]]})
    assert not check_containment(m).passed


def test_containment_two_dimensional():
    m = load_model(
        {"name": "p2", "dimension": 2, "states": 1, "period": 1,
         "potential": ["0.5*x1 + sin(2*pi*y2)"], "rates": [["0"]]}
    )
    assert check_containment(m).passed


def test_lln_gradient_model(gradient):
    rep, summaries = lln_experiment(gradient, grid(gradient), path_count=100, seed=1)
    assert rep.passed, rep.line()
    assert [s.epsilon for s in summaries] == [0.1, 0.05, 0.02]
    devs = list(rep.measured["mean_sup_deviation"].values())
    assert devs[0] > devs[1] > devs[2]


def test_lln_free_model(free):
    rep, _ = lln_experiment(free, grid(free), path_count=100, horizon=2.0, seed=2)
    assert rep.passed, rep.line()
    assert rep.measured["reference_displacement"] == [0.0]
    assert rep.measured["sign_agreement"] is None


@pytest.mark.slow
def test_fig2_experiment_writes_files(tmp_path):
    rep = fig2_experiment(tmp_path, seed=0)
    assert rep.passed, rep.line()
    for eps in ("0.5", "0.1", "0.02"):
        lines = (tmp_path / f"fig2_eps{eps}.csv").read_text().splitlines()
        assert lines[0] == "t,y1,state"
    summary = json.loads((tmp_path / "fig2_ensemble_eps0.02.json").read_text())
    assert summary["path_count"] == 100
    assert rep.measured["v_star_x_dependence"] <= 1e-9


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_fig2_experiment_robust_across_seeds(tmp_path, seed):
    assert fig2_experiment(tmp_path, seed=seed).passed


def test_report_json_excludes_timing():
    rep = CheckReport("x", True, 1.0, 2.0)
    rep.wall_time = 3.5
    doc = json.loads(dump_reports([rep]))
    assert "wall_time" not in doc["reports"][0]
    assert "wall_time" in json.loads(dump_reports([rep], timings=True))["reports"][0]
