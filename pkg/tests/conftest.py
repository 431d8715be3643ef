import numpy as np
import pytest

from switchld.modelspec import builtin_model, evaluate
from switchld.spectral import CellGrid


@pytest.fixture(scope="session")
def free():
    return builtin_model("free")


@pytest.fixture(scope="session")
def gradient():
    return builtin_model("gradient")


@pytest.fixture(scope="session")
def fig2():
    return builtin_model("fig2")


@pytest.fixture(scope="session")
def models(free, gradient, fig2):
    return {"free": free, "gradient": gradient, "fig2": fig2}


def grid(model, n=None):
    return CellGrid.for_model(model, n)


def reference_matrix(model, n_points, x, p):
    """Dense d=1 cell matrix built cell by cell with the scalar evaluator."""
    J, P = model.states, model.period
    h = P / n_points
    n = J * n_points
    M = np.zeros((n, n))
    for i in range(J):
        for k in range(n_points):
            y = k * h
            row = i * n_points + k
            g = evaluate(model.drift[i][0], [x], [y])
            b = p - g
            M[row, i * n_points + (k + 1) % n_points] += 0.5 / h**2 + b / (2 * h)
            M[row, i * n_points + (k - 1) % n_points] += 0.5 / h**2 - b / (2 * h)
            total_rate = 0.0
            for j in range(J):
                if j != i:
                    r = evaluate(model.rates[i][j], [x], [y])
                    M[row, j * n_points + k] += r
                    total_rate += r
            M[row, row] += -1.0 / h**2 - total_rate + 0.5 * p * p - p * g
    return M


def reference_principal(M):
    """Dominant eigenvalue and positive right/left vectors (right: sup-norm 1, left: sum 1)."""
    w, vr = np.linalg.eig(M)
    k = int(np.argmax(w.real))
    wl, vl = np.linalg.eig(M.T)
    kl = int(np.argmax(wl.real))
    right = np.abs(vr[:, k].real)
    left = np.abs(vl[:, kl].real)
    return float(w[k].real), right / right.max(), left / left.sum()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
