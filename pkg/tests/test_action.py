import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import switchld.action as action_mod
from conftest import grid
from switchld.action import (
    CoercivityError,
    lagrangian,
    legendre,
    momentum_bound,
    path_action,
    zero_cost_path,
)
from switchld.errors import PathError
from switchld.io import read_path_csv, write_path_csv
from switchld.modelspec import builtin_model, load_model
from switchld.simulate import PathSample, linear_path
from switchld.spectral import hamiltonian, lln_velocity


@pytest.mark.parametrize("v", [-1.5, -0.3, 0.0, 0.8, 2.0])
def test_free_lagrangian(free, v):
    L, p_star = legendre(free, grid(free, 64), 0.0, v)
    assert L == pytest.approx(v * v / 2, abs=1e-6)
    assert p_star[0] == pytest.approx(v, abs=1e-6)


@pytest.mark.parametrize("v", [-2.0, -1.0, 0.0, 0.5])
def test_gradient_lagrangian(gradient, v):
    assert lagrangian(gradient, grid(gradient, 64), 0.3, v) == pytest.approx((v + 1) ** 2 / 2, abs=1e-6)


@pytest.mark.parametrize("name", ["free", "gradient", "fig2"])
def test_lagrangian_vanishes_at_averaged_velocity(models, name):
    m = models[name]
    g = grid(m)
    for x in (-1.0, 0.5):
        assert lagrangian(m, g, x, lln_velocity(m, g, x)) <= 1e-6


def test_boundary_maximiser_raises(free, monkeypatch):
    monkeypatch.setattr(action_mod, "momentum_bound", lambda model, v: 1.0)
    with pytest.raises(CoercivityError):
        legendre(free, grid(free, 64), 0.0, 3.0)


def test_momentum_bound_formula(gradient):
    assert momentum_bound(gradient, -0.5) == pytest.approx(1.0 + 2 * np.sqrt(1.05**2 + 1) + 4)


def test_two_dimensional_legendre_not_supported():
    m = load_model({"name": "f2", "dimension": 2, "states": 1, "period": 1, "potential": ["0"], "rates": [["0"]]})
    with pytest.raises(NotImplementedError):
        legendre(m, grid(m, 8), [0, 0], [1, 0])


@settings(max_examples=60, deadline=None)
@given(
    st.sampled_from(["free", "gradient"]),
    st.floats(-2, 2),
    st.floats(-1.5, 1.5),
    st.floats(-3, 3),
)
def test_fenchel_inequality(name, x, v, p):
    m = builtin_model(name)
    g = grid(m, 64)
    L = lagrangian(m, g, x, v)
    assert L >= -1e-8
    assert p * v <= L + hamiltonian(m, g, x, p) + 1e-6


def test_fenchel_inequality_fig2(fig2):
    g = grid(fig2, 64)
    rng = np.random.default_rng(5)
    for _ in range(6):
        v = rng.uniform(-1, 1)
        L = lagrangian(fig2, g, 0.0, v)
        assert L >= -1e-8
        for p in rng.uniform(-3, 3, 10):
            assert p * v <= L + hamiltonian(fig2, g, 0.0, p) + 1e-6


def test_quadratic_growth_away_from_minimiser(fig2):
    g = grid(fig2, 64)
    vstar = lln_velocity(fig2, g, 0.0)[0]
    for dv in (-1.0, -0.1, 0.1, 1.0):
        assert lagrangian(fig2, g, 0.0, vstar + dv) / dv**2 > 1e-3


def test_constant_path_has_zero_action(free):
    path = PathSample(np.linspace(0, 1, 6), np.full((6, 1), 0.4))
    rep = path_action(free, grid(free, 64), path)
    assert abs(rep.total_action) <= 1e-8


@pytest.mark.parametrize("v, T", [(0.5, 2.0), (-1.2, 1.0)])
def test_straight_path_action(free, v, T):
    rep = path_action(free, grid(free, 64), linear_path([0.0], [v], T))
    assert rep.total_action == pytest.approx(T * v * v / 2, rel=1e-4)


def test_action_report_consistency(gradient):
    t = np.array([0.0, 0.3, 0.7, 1.5])
    path = PathSample(t, np.array([[0.0], [0.2], [-0.1], [0.4]]))
    rep = path_action(gradient, grid(gradient, 64), path)
    total = sum((s.t1 - s.t0) * s.lagrangian for s in rep.segments)
    assert rep.total_action == pytest.approx(total, abs=1e-12)
    assert all(s.lagrangian >= -1e-8 for s in rep.segments)
    doc = rep.to_dict()
    assert doc["rule"] == "midpoint" and len(doc["segments"]) == 3
    assert set(doc["segments"][0]) == {"t0", "t1", "v", "L", "p_star"}


def test_path_dimension_mismatch(free):
    with pytest.raises(PathError):
        path_action(free, grid(free, 64), PathSample(np.array([0.0, 1.0]), np.zeros((2, 2))))


def test_zero_cost_paths(free, gradient, fig2):
    p = zero_cost_path(free, grid(free), [0.3], 1.0)
    np.testing.assert_allclose(p.points, 0.3, atol=0)
    p = zero_cost_path(gradient, grid(gradient), [0.3], 2.0, dt=1e-2)
    np.testing.assert_allclose(p.points[:, 0], 0.3 - p.times, atol=1e-8)
    vstar = lln_velocity(fig2, grid(fig2), 0.0)[0]
    p = zero_cost_path(fig2, grid(fig2), [0.0], 2.0)
    np.testing.assert_allclose(p.points[:, 0], vstar * p.times, atol=1e-8)


def test_zero_cost_path_step_limit(free):
    with pytest.raises(ValueError):
        zero_cost_path(free, grid(free), [0.0], 1.0, dt=0.05)


def test_fig2_zero_cost_path_has_no_action(fig2):
    path = zero_cost_path(fig2, grid(fig2), [0.0], 2.0)
    assert path_action(fig2, grid(fig2), path).total_action <= 1e-4


def test_action_refinement_converges(free):
    g = grid(free, 64)

    def sampled(K):
        t = np.linspace(0, 1, K + 1)
        return PathSample(t, (0.3 * np.sin(np.pi * t))[:, None])

    vals = [path_action(free, g, sampled(K)).total_action for K in (4, 8, 16)]
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert d2 <= 4 * d1
    assert d2 < d1


def test_path_csv_round_trip(tmp_path):
    path = PathSample(np.array([0.0, 0.5, 1.25]), np.array([[0.0], [0.1], [-0.2]]))
    f = tmp_path / "p.csv"
    write_path_csv(path, f)
    assert f.read_text().splitlines()[0] == "t,x1"
    back = read_path_csv(f)
    np.testing.assert_array_equal(back.times, path.times)
    np.testing.assert_array_equal(back.points, path.points)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "time,x1\n0,0\n1,1\n",
        "t,x1\n0,0\n1\n",
        "t,x1\n0,abc\n",
        "t,x1\n",
        "t,x1\n0,0\n0,1\n",
        "t,x1\n0.5,0\n1,1\n",
        "t,x1\n0,0\n1,nan\n",
    ],
)
def test_bad_path_files(tmp_path, text):
    f = tmp_path / "p.csv"
    f.write_text(text)
    with pytest.raises(PathError):
        read_path_csv(f)
