"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every criterion appends one ``[PASS]``/``[FAIL]`` line that is echoed in the
terminal summary of the pytest run.
"""

import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_LINES, grid
from switchld.action import lagrangian
from switchld.cli import run
from switchld.spectral import assemble_cell_operator, clear_cache, hamiltonian, principal_eigenpair
from switchld.verify import (
    check_coercivity,
    check_containment,
    check_convexity,
    check_convexity_refinement,
    check_donsker_varadhan,
    check_fenchel,
    check_h_zero,
    check_hellmann_feynman,
    check_oracle,
    check_velocity,
    check_zero_at_velocity,
    lln_experiment,
)

MODELS = ("free", "gradient", "fig2")
SAMPLE_X = [np.array([x]) for x in (-2.0, -1.0, 0.0, 1.0, 2.0)]


class Criterion:
    """Times a block and records one summary line; failures stay assertions."""

    def __init__(self, number: int, title: str, budget: float):
        self.number, self.title, self.budget = number, title, budget
        self.details: list[str] = []
        self.ok = True

    def check(self, cond: bool, detail: str) -> None:
        self.details.append(("" if cond else "NOT ") + detail)
        self.ok &= bool(cond)

    def __enter__(self):
        clear_cache()
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.ok = False
            self.details.append(f"{exc_type.__name__}: {exc}")
        in_time = elapsed < self.budget
        status = "PASS" if self.ok and in_time else "FAIL"
        line = (
            f"[{status}] criterion {self.number}: {self.title} "
            f"({elapsed:.1f}s of {self.budget:g}s) " + "; ".join(self.details)
        )
        ACCEPTANCE_LINES.append(line)
        print(line)
        if exc_type is None:
            assert self.ok, line
            assert in_time, line
        return False


def test_criterion_01_closed_form_hamiltonians(models):
    # compile the kernels outside the timed block
    principal_eigenpair(assemble_cell_operator(models["free"], grid(models["free"], 8), [0.0], [0.1]))
    with Criterion(1, "closed-form Hamiltonians", 1.0) as c:
        ps = (-2.0, -1.0, 0.0, 1.0, 2.0)
        free_err = max(abs(hamiltonian(models["free"], grid(models["free"], 64), 0.0, p) - p * p / 2) for p in ps)
        g = models["gradient"]
        grad_err = max(abs(hamiltonian(g, grid(g, 64), 0.0, p) - (p * p / 2 - p * 1.0)) for p in ps)
        c.check(free_err <= 1e-8, f"free max error {free_err:.2e} <= 1e-8")
        c.check(grad_err <= 1e-8, f"gradient max error {grad_err:.2e} <= 1e-8")


def test_criterion_02_h_vanishes_at_zero_momentum(models):
    with Criterion(2, "H(x,0) = 0", 1.0) as c:
        for name in MODELS:
            m = models[name]
            rep = check_h_zero(m, grid(m), SAMPLE_X)
            c.check(rep.passed, f"{name} max |H(x,0)| {rep.measured:.1e}")


def test_criterion_03_oracle_equivalence(models):
    with Criterion(3, "power iteration vs dense eigendecomposition", 30.0) as c:
        for name in MODELS:
            m = models[name]
            rep = check_oracle(m, grid(m))
            c.check(
                rep.passed and rep.context["n"] <= 512,
                f"{name} n={rep.context['n']} dlam {rep.measured['lambda']:.1e} dvec {rep.measured['vector']:.1e}",
            )


def test_criterion_04_convexity(fig2):
    with Criterion(4, "convexity in p", 120.0) as c:
        rep = check_convexity(fig2, grid(fig2, 128), count=100)
        c.check(rep.passed, f"max defect {rep.measured:.1e} within 5e-4(1+|H|)")
        ref = check_convexity_refinement(fig2, levels=(32, 64, 128), count=100)
        c.check(ref.passed, f"refinement {ref.message}")


def test_criterion_05_coercivity(models):
    with Criterion(5, "coercivity bound", 60.0) as c:
        for name in ("fig2", "gradient"):
            m = models[name]
            rep = check_coercivity(m, grid(m), SAMPLE_X, magnitudes=(2.0, 3.0, 4.0))
            c.check(rep.passed, f"{name} smallest margin {rep.measured:.3f}")


def test_criterion_06_donsker_varadhan(fig2):
    with Criterion(6, "Donsker-Varadhan consistency", 120.0) as c:
        g = grid(fig2, 16)
        rep = check_donsker_varadhan(fig2, g, count=50)
        m = rep.measured
        c.check(rep.context["grid"] == 16 and fig2.states == 4, "N=16, J=4")
        c.check(m["tilted_identity"] <= 1e-4, f"identity error {m['tilted_identity']:.1e}")
        c.check(m["max_sup_excess"] <= 1e-4, f"random measures excess {m['max_sup_excess']:.1e}")
        c.check(abs(m["I(stationary)"]) <= 1e-6, f"I(stationary) {m['I(stationary)']:.1e}")


def test_criterion_07_velocity_consistency(models):
    with Criterion(7, "velocity consistency", 60.0) as c:
        for name in MODELS:
            m = models[name]
            v = check_velocity(m, grid(m), SAMPLE_X)
            hf = check_hellmann_feynman(m, grid(m), SAMPLE_X)
            c.check(v.passed, f"{name} |dH/dp - v*| {v.measured:.1e}")
            c.check(hf.passed, f"{name} HF vs FD {hf.measured:.1e}")


def test_criterion_08_legendre_duality(models):
    with Criterion(8, "Legendre duality", 60.0) as c:
        free = models["free"]
        g = grid(free, 64)
        err = max(abs(lagrangian(free, g, 0.0, v) - v * v / 2) for v in np.linspace(-2, 2, 9))
        c.check(err <= 1e-6, f"free L error {err:.1e}")
        fig2 = models["fig2"]
        rep = check_fenchel(fig2, grid(fig2, 64), count=200, groups=20)
        c.check(rep.passed, f"Fenchel gap {rep.measured['max_gap']:.1e} over 200 triples")
        for name in MODELS:
            m = models[name]
            z = check_zero_at_velocity(m, grid(m), SAMPLE_X)
            c.check(z.passed, f"{name} L(v*) {z.measured:.1e}")


def test_criterion_09_lln_concentration(fig2):
    with Criterion(9, "LLN concentration", 600.0) as c:
        rep, _ = lln_experiment(fig2, grid(fig2), (0.1, 0.05, 0.02), path_count=200, horizon=5.0, seed=0)
        m = rep.measured
        devs = list(m["mean_sup_deviation"].values())
        c.check(devs[0] > devs[1] > devs[2], "sup-deviation " + " > ".join(f"{d:.3f}" for d in devs))
        c.check(
            m["abs_error"][0] <= rep.tolerance["displacement"][0],
            f"displacement error {m['abs_error'][0]:.3f} <= {rep.tolerance['displacement'][0]:.3f}",
        )
        c.check(m["sign_agreement"] >= 0.9, f"sign agreement {m['sign_agreement']:.2f}")


def test_criterion_10_containment(models):
    with Criterion(10, "containment", 10.0) as c:
        for name in MODELS:
            rep = check_containment(models[name])
            c.check(rep.passed, f"{name} sup {rep.measured:.6g}")
        free_sup = check_containment(models["free"]).measured
        c.check(abs(free_sup - 0.125) <= 1e-6, "free sup = 1/8")


def _data_files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_11_reproducibility(tmp_path):
    path_csv = tmp_path / "path.csv"
    path_csv.write_text("t,x1\n0,0\n0.5,-0.1\n1,-0.15\n")
    invocations = {
        "simulate": ["simulate", "--builtin", "fig2", "--epsilon", "0.02", "--paths", "100",
                     "--horizon", "5", "--seed", "7", "--out", "{out}"],
        "hamiltonian": ["hamiltonian", "--builtin", "fig2", "--grid", "128", "--x", "0", "--p-min", "-2",
                        "--p-max", "2", "--p-steps", "41", "--out", "{out}/h.csv"],
        "velocity": ["velocity", "--builtin", "fig2", "--format", "json", "--out", "{out}/v.json"],
        "action": ["action", "--builtin", "fig2", "--out", "{out}/a.json", str(path_csv)],
        "verify": ["verify", "--builtin", "fig2", "--suite", "measure", "--out", "{out}/r.json"],
    }
    with Criterion(11, "byte-identical CLI reruns", 300.0) as c:
        for name, argv in invocations.items():
            outputs = []
            for rerun in ("a", "b"):
                out = tmp_path / name / rerun
                out.mkdir(parents=True)
                code = run([a.replace("{out}", str(out)) for a in argv])
                outputs.append((code, _data_files(out)))
            (code_a, files_a), (code_b, files_b) = outputs
            c.check(code_a == code_b == 0 and files_a and files_a == files_b,
                    f"{name} ({len(files_a)} files)")

