"""Property suites and the two simulation experiments."""

from __future__ import annotations

import itertools
import math
import time
from pathlib import Path
from typing import Callable

import numpy as np

from .action import legendre, path_action, zero_cost_path
from .errors import SwitchLDError
from .io import write_json, write_trajectory_csv
from .modelspec.model import ModelDefinition
from .reports import CheckReport
from .simulate import PathSample, SimulationConfig, simulate_ensemble, simulate_path
from .spectral.cell import CellGrid, assemble_cell_operator
from .spectral.eigen import dense_eigen_oracle, principal_eigenpair
from .spectral.hamiltonian import (
    CellMeasure,
    eigenpair,
    hamiltonian,
    hamiltonian_grad_p,
    lln_velocity,
    potential_average,
    donsker_varadhan,
    stationary_measure,
)

SUITES = ("hamiltonian", "measure", "action", "containment", "all")

H0_TOL = 1e-10
CONVEXITY_TOL = 5e-4
COERCIVITY_SLACK = 1e-3
ORACLE_LAMBDA_TOL = 1e-8
ORACLE_VECTOR_TOL = 1e-6
ORACLE_MAX_N = 512
MEASURE_RESIDUAL_TOL = 1e-9
VELOCITY_TOL = 1e-6
FD_STEP = 1e-4
FD_REL_TOL = 1e-4
DV_TOL = 1e-4
DV_STATIONARY_TOL = 1e-6
DV_MAX_N = 128
FENCHEL_TOL = 1e-6
L_NONNEG_TOL = 1e-8
L_ZERO_TOL = 1e-6
STRICT_CONVEXITY_MIN = 1e-3
CONTAINMENT_SPLIT = 1e3
CONTAINMENT_TAIL_TOL = 1e-3
LLN_BIAS = 0.05
SIGN_FRACTION = 0.9


def sample_positions(d: int) -> list[np.ndarray]:
    return [np.array(p, dtype=float) for p in itertools.product(range(-2, 3), repeat=d)]


def _timed(name: str, fn: Callable[[], CheckReport]) -> CheckReport:
    t0 = time.perf_counter()
    try:
        rep = fn()
    except SwitchLDError as exc:
        rep = CheckReport(name, False, None, None, {}, f"{type(exc).__name__}: {exc}")
    rep.wall_time = time.perf_counter() - t0
    return rep


def _ctx(model, grid, **extra) -> dict:
    out = {"model": model.name, "grid": grid.points}
    out.update(extra)
    return out


def _random_p(rng, d, lo=-3.0, hi=3.0) -> np.ndarray:
    return rng.uniform(lo, hi, size=d)


def coarse_grid(model: ModelDefinition, grid: CellGrid, max_n: int) -> CellGrid:
    """The finest grid with N^d J <= max_n (at most the given grid)."""
    N = grid.points
    while N > 3 and N**model.dimension * model.states > max_n:
        N //= 2
    return CellGrid.for_model(model, max(N, 3))


# --------------------------------------------------------------------------
# Hamiltonian properties


def check_h_zero(model, grid, xs=None) -> CheckReport:
    xs = sample_positions(model.dimension) if xs is None else xs
    vals = [abs(hamiltonian(model, grid, x, np.zeros(model.dimension))) for x in xs]
    worst = int(np.argmax(vals))
    ok = vals[worst] <= H0_TOL
    return CheckReport(
        "H(x,0)=0", ok, vals[worst], H0_TOL,
        _ctx(model, grid, witness={"x": xs[worst].tolist()}),
        "H vanishes at p=0" if ok else f"H(x,0)={vals[worst]:.3e} at x={xs[worst].tolist()}",
    )


def convexity_defects(model, grid, pairs) -> tuple[np.ndarray, np.ndarray]:
    """H(mid) - (H1 + H2)/2 and |H(mid)| for each (x, p1, p2)."""
    defects, scale = [], []
    for x, p1, p2 in pairs:
        h1 = hamiltonian(model, grid, x, p1)
        h2 = hamiltonian(model, grid, x, p2)
        hm = hamiltonian(model, grid, x, 0.5 * (p1 + p2))
        defects.append(hm - 0.5 * (h1 + h2))
        scale.append(abs(hm))
    return np.array(defects), np.array(scale)


def random_pairs(model, count, seed):
    rng = np.random.default_rng(seed)
    xs = sample_positions(model.dimension)
    return [
        (xs[rng.integers(len(xs))], _random_p(rng, model.dimension), _random_p(rng, model.dimension))
        for _ in range(count)
    ]


def check_convexity(model, grid, count=100, seed=0) -> CheckReport:
    pairs = random_pairs(model, count, seed)
    defects, scale = convexity_defects(model, grid, pairs)
    ratio = defects / (CONVEXITY_TOL * (1 + scale))
    k = int(np.argmax(ratio))
    ok = bool(ratio[k] <= 1.0)
    x, p1, p2 = pairs[k]
    return CheckReport(
        "convexity in p", ok, float(max(defects.max(), 0.0)), f"{CONVEXITY_TOL}*(1+|H|)",
        _ctx(model, grid, pairs=count, seed=seed, witness={"x": x.tolist(), "p1": p1.tolist(), "p2": p2.tolist()}),
        f"max midpoint defect {defects[k]:.3e}",
    )


def check_convexity_refinement(model, levels=(32, 64, 128), count=100, seed=0) -> CheckReport:
    pairs = random_pairs(model, count, seed)
    worst = []
    for N in levels:
        d, _ = convexity_defects(model, CellGrid.for_model(model, N), pairs)
        worst.append(float(max(d.max(), 0.0)))
    ok = all(b <= a for a, b in zip(worst, worst[1:]))
    return CheckReport(
        "convexity defect non-increasing under refinement", ok, dict(zip(map(str, levels), worst)), None,
        {"model": model.name, "levels": list(levels), "pairs": count, "seed": seed},
        "defects " + ", ".join(f"N={N}: {w:.2e}" for N, w in zip(levels, worst)),
    )


def check_coercivity(model, grid, xs=None, magnitudes=(2.0, 3.0, 4.0)) -> CheckReport:
    d = model.dimension
    xs = sample_positions(d) if xs is None else xs
    G = model.drift_sup_bound
    directions = [np.array(v, dtype=float) for v in itertools.product((-1, 0, 1), repeat=d) if any(v)]
    directions = [u / np.linalg.norm(u) for u in directions]
    worst, where = math.inf, None
    for x in xs:
        for r in magnitudes:
            for u in directions:
                p = r * u
                margin = hamiltonian(model, grid, x, p) - (r * r / 4 - G * G - COERCIVITY_SLACK)
                if margin < worst:
                    worst, where = margin, {"x": x.tolist(), "p": p.tolist()}
    ok = worst >= 0
    return CheckReport(
        "coercivity lower bound H >= |p|^2/4 - G^2", ok, worst, 0.0,
        _ctx(model, grid, G=G, witness=where),
        f"smallest margin {worst:.3e}" + ("" if ok else f" at {where}"),
    )


def check_oracle(model, grid, count=20, seed=1) -> CheckReport:
    g = coarse_grid(model, grid, ORACLE_MAX_N)
    rng = np.random.default_rng(seed)
    worst_l, worst_v, where = 0.0, 0.0, None
    for _ in range(count):
        x = rng.uniform(-2, 2, size=model.dimension)
        p = _random_p(rng, model.dimension)
        op = assemble_cell_operator(model, g, x, p)
        pw = principal_eigenpair(op)
        de = dense_eigen_oracle(op)
        dl = abs(pw.lam - de.lam)
        dv = float(np.max(np.abs(pw.right - de.right)))
        if dl / ORACLE_LAMBDA_TOL + dv / ORACLE_VECTOR_TOL > worst_l / ORACLE_LAMBDA_TOL + worst_v / ORACLE_VECTOR_TOL:
            where = {"x": x.tolist(), "p": p.tolist()}
        worst_l, worst_v = max(worst_l, dl), max(worst_v, dv)
    ok = worst_l <= ORACLE_LAMBDA_TOL and worst_v <= ORACLE_VECTOR_TOL
    return CheckReport(
        "power iteration matches dense eigendecomposition", ok,
        {"lambda": worst_l, "vector": worst_v}, {"lambda": ORACLE_LAMBDA_TOL, "vector": ORACLE_VECTOR_TOL},
        _ctx(model, g, samples=count, seed=seed, n=g.size, witness=where),
        "positive Perron vectors, real dominant eigenvalue",
    )


# --------------------------------------------------------------------------
# stationary measure and velocity


def check_stationary(model, grid, xs=None) -> CheckReport:
    xs = sample_positions(model.dimension) if xs is None else xs
    worst, where = 0.0, None
    for x in xs:
        mu = stationary_measure(model, grid, x)
        T = assemble_cell_operator(model, grid, x, np.zeros(model.dimension)).generator
        res = float(np.max(np.abs(T.T @ mu.weights)))
        bad = mu.weights.min() < 0 or abs(mu.weights.sum() - 1) > 1e-12
        if bad:
            res = math.inf
        if res >= worst:
            worst, where = res, x.tolist()
    ok = worst <= MEASURE_RESIDUAL_TOL
    return CheckReport(
        "stationary measure", ok, worst, MEASURE_RESIDUAL_TOL,
        _ctx(model, grid, witness={"x": where}), "nonnegative, normalised, |T^T mu| small",
    )


def check_velocity(model, grid, xs=None) -> CheckReport:
    xs = sample_positions(model.dimension) if xs is None else xs
    zero = np.zeros(model.dimension)
    worst, where = 0.0, None
    for x in xs:
        diff = float(np.max(np.abs(hamiltonian_grad_p(model, grid, x, zero) - lln_velocity(model, grid, x))))
        if diff >= worst:
            worst, where = diff, x.tolist()
    ok = worst <= VELOCITY_TOL
    return CheckReport(
        "dH/dp(x,0) equals averaged drift velocity", ok, worst, VELOCITY_TOL,
        _ctx(model, grid, witness={"x": where}), "",
    )


def fd_gradient(model, grid, x, p, step=FD_STEP) -> np.ndarray:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = []
    for a in range(model.dimension):
        e = np.zeros_like(p)
        e[a] = step
        out.append((hamiltonian(model, grid, x, p + e) - hamiltonian(model, grid, x, p - e)) / (2 * step))
    return np.array(out)


def check_hellmann_feynman(model, grid, xs=None, momenta=(-1.0, 0.0, 1.5)) -> CheckReport:
    """Relative error |HF - FD| / max(|FD|, 1)."""
    xs = sample_positions(model.dimension) if xs is None else xs
    worst, where = 0.0, None
    for x in xs:
        for q in momenta:
            p = np.full(model.dimension, q)
            hf = hamiltonian_grad_p(model, grid, x, p)
            fd = fd_gradient(model, grid, x, p)
            err = float(np.max(np.abs(hf - fd) / np.maximum(np.abs(fd), 1.0)))
            if err >= worst:
                worst, where = err, {"x": x.tolist(), "p": p.tolist()}
    ok = worst <= FD_REL_TOL
    return CheckReport(
        "Hellmann-Feynman gradient matches finite differences", ok, worst, FD_REL_TOL,
        _ctx(model, grid, step=FD_STEP, witness=where), "",
    )


def check_donsker_varadhan(model, grid, x=None, p=None, count=50, seed=2) -> CheckReport:
    """Variational identity on a grid with n <= 128."""
    d = model.dimension
    g = coarse_grid(model, grid, DV_MAX_N)
    x = np.zeros(d) if x is None else np.atleast_1d(x)
    p = np.full(d, 1.0) if p is None else np.atleast_1d(p)
    pair = eigenpair(model, g, x, p)
    lam = pair.lam

    tilted = CellMeasure(pair.tilted_measure(), g)
    identity = abs(lam - (potential_average(model, g, x, p, tilted) - donsker_varadhan(model, g, x, p, tilted).value))

    stat = _generator_stationary(assemble_cell_operator(model, g, x, p))
    i_stat = donsker_varadhan(model, g, x, p, stat).value

    rng = np.random.default_rng(seed)
    excess = -math.inf
    for _ in range(count):
        mu = CellMeasure(rng.dirichlet(np.ones(g.size)), g)
        val = potential_average(model, g, x, p, mu) - donsker_varadhan(model, g, x, p, mu).value
        excess = max(excess, val - lam)
    ok = identity <= DV_TOL and abs(i_stat) <= DV_STATIONARY_TOL and excess <= DV_TOL
    return CheckReport(
        "variational formula for H", ok,
        {"tilted_identity": identity, "I(stationary)": i_stat, "max_sup_excess": excess},
        {"tilted_identity": DV_TOL, "I(stationary)": DV_STATIONARY_TOL, "max_sup_excess": DV_TOL},
        _ctx(model, g, x=x.tolist(), p=p.tolist(), random_measures=count, seed=seed),
        "optimiser left*right attains H; random measures stay below H",
    )


def _generator_stationary(op) -> CellMeasure:
    """Invariant measure of the generator part T at the operator's momentum."""
    from dataclasses import replace

    gen_only = replace(op, matrix=op.generator, potential=np.zeros_like(op.potential))
    return CellMeasure(principal_eigenpair(gen_only).left, op.grid)


# --------------------------------------------------------------------------
# Lagrangian properties


def fenchel_triples(model, count, seed, v_range=(-1.0, 1.0), groups=None):
    """Random (x, v, p); with ``groups`` the (x, v) pairs are shared across triples."""
    rng = np.random.default_rng(seed)
    d = model.dimension
    groups = count if groups is None else groups
    xv = [(rng.uniform(-2, 2, size=d), rng.uniform(*v_range, size=d)) for _ in range(groups)]
    out = []
    for k in range(count):
        x, v = xv[k % groups]
        out.append((x, v, _random_p(rng, d)))
    return out


def check_fenchel(model, grid, count=200, seed=3, groups=None, v_range=(-1.0, 1.0)) -> CheckReport:
    worst, where, min_L = -math.inf, None, math.inf
    cache = {}
    for x, v, p in fenchel_triples(model, count, seed, v_range, groups):
        key = (tuple(x), tuple(v))
        if key not in cache:
            cache[key] = legendre(model, grid, x, v)[0]
        L = cache[key]
        min_L = min(min_L, L)
        gap = float(p @ v) - L - hamiltonian(model, grid, x, p)
        if gap > worst:
            worst, where = gap, {"x": x.tolist(), "v": v.tolist(), "p": p.tolist()}
    ok = worst <= FENCHEL_TOL and min_L >= -L_NONNEG_TOL
    return CheckReport(
        "Fenchel inequality p.v <= L + H and L >= 0", ok, {"max_gap": worst, "min_L": min_L},
        {"max_gap": FENCHEL_TOL, "min_L": -L_NONNEG_TOL},
        _ctx(model, grid, triples=count, distinct_xv=len(cache), seed=seed, witness=where), "",
    )


def check_zero_at_velocity(model, grid, xs=None) -> CheckReport:
    xs = sample_positions(model.dimension) if xs is None else xs
    worst, where = -math.inf, None
    for x in xs:
        L = legendre(model, grid, x, lln_velocity(model, grid, x))[0]
        if L > worst:
            worst, where = L, x.tolist()
    ok = worst <= L_ZERO_TOL
    return CheckReport(
        "L(x, v*(x)) = 0", ok, worst, L_ZERO_TOL, _ctx(model, grid, witness={"x": where}), ""
    )


def check_strict_convexity(model, grid, xs=None, offsets=(-1.0, -0.5, -0.1, 0.1, 0.5, 1.0)) -> CheckReport:
    xs = sample_positions(model.dimension) if xs is None else xs
    c_min, where = math.inf, None
    for x in xs:
        vstar = lln_velocity(model, grid, x)
        for dv in offsets:
            L = legendre(model, grid, x, vstar + dv)[0]
            c = L / dv**2
            if c < c_min:
                c_min, where = c, {"x": x.tolist(), "v": (vstar + dv).tolist()}
    ok = c_min > STRICT_CONVEXITY_MIN
    return CheckReport(
        "unique zero of L (quadratic growth away from v*)", ok, c_min, STRICT_CONVEXITY_MIN,
        _ctx(model, grid, witness=where), f"min L/(v-v*)^2 = {c_min:.3e}",
    )


def smooth_test_path(model, grid, segments, horizon=1.0, x0=0.0) -> PathSample:
    vstar = float(lln_velocity(model, grid, x0)[0])
    t = np.linspace(0.0, horizon, segments + 1)
    x = x0 + vstar * t + 0.3 * np.sin(np.pi * t / horizon)
    return PathSample(t, x[:, None])


def check_quadrature(model, grid, base_segments=2) -> CheckReport:
    """Action changes shrink when the path sampling is refined (K, 2K, 4K)."""
    vals = [
        path_action(model, grid, smooth_test_path(model, grid, base_segments * 2**k)).total_action
        for k in range(3)
    ]
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    ratio = d1 / d2 if d2 > 0 else math.inf
    ok = d2 <= d1
    return CheckReport(
        "midpoint action converges under refinement", ok, {"actions": vals, "change_ratio": ratio}, None,
        _ctx(model, grid, segments=[base_segments * 2**k for k in range(3)]),
        f"successive changes {d1:.3e}, {d2:.3e}",
    )


# --------------------------------------------------------------------------
# containment


def containment_grid() -> np.ndarray:
    r = np.concatenate([[0.0, 1.0], np.logspace(-3, 6, 181)])
    return np.unique(r)


def check_containment(model: ModelDefinition, fast_points: int = 33) -> CheckReport:
    """sup of V_{x, grad Y(x)} with Y(x) = log(1 + |x|^2)/2 on |x| in [0, 1e6]."""
    d = model.dimension
    radii = containment_grid()
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    fast_axis = np.arange(fast_points) * (model.period / fast_points)
    fast = np.stack([m.ravel() for m in np.meshgrid(*([fast_axis] * d), indexing="ij")], axis=-1)

    best_in, best_out, where = -math.inf, -math.inf, None
    overall = -math.inf
    for r in radii:
        for u in dirs:
            x = r * u
            grad_y = x / (1.0 + float(x @ x))
            g = model.drift_at(np.broadcast_to(x, fast.shape), fast)  # (J, F, d)
            V = 0.5 * float(grad_y @ grad_y) - g @ grad_y
            top = float(np.max(np.where(np.isfinite(V), V, np.inf)))
            if top > overall:
                overall, where = top, {"x": x.tolist()}
            if r <= CONTAINMENT_SPLIT:
                best_in = max(best_in, top)
            if r >= CONTAINMENT_SPLIT:
                best_out = max(best_out, top)
    ok = math.isfinite(overall) and best_out <= best_in + CONTAINMENT_TAIL_TOL
    return CheckReport(
        "containment function log(1+|x|^2)/2", ok, overall, CONTAINMENT_TAIL_TOL,
        {"model": model.name, "sup_inner": best_in, "sup_tail": best_out, "witness": where},
        f"sup V = {overall:.6g} (|x|<=1e3: {best_in:.6g}, |x|>=1e3: {best_out:.6g})",
    )


# --------------------------------------------------------------------------


def run_check_suite(model: ModelDefinition, grid: CellGrid, suite: str = "all", seed: int = 0) -> list[CheckReport]:
    """Run a named group of property checks; failures are reports, never exceptions."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose one of {', '.join(SUITES)}")
    checks: list[tuple[str, Callable[[], CheckReport]]] = []
    if suite in ("hamiltonian", "all"):
        checks += [
            ("H(x,0)=0", lambda: check_h_zero(model, grid)),
            ("convexity in p", lambda: check_convexity(model, grid, seed=seed)),
            ("coercivity", lambda: check_coercivity(model, grid)),
            ("oracle equivalence", lambda: check_oracle(model, grid, seed=seed + 1)),
        ]
        if model.dimension == 1:
            checks.append(("convexity refinement", lambda: check_convexity_refinement(model, seed=seed)))
    if suite in ("measure", "all"):
        checks += [
            ("stationary measure", lambda: check_stationary(model, grid)),
            ("velocity consistency", lambda: check_velocity(model, grid)),
            ("Hellmann-Feynman", lambda: check_hellmann_feynman(model, grid)),
            ("variational formula", lambda: check_donsker_varadhan(model, grid, seed=seed + 2)),
        ]
    if suite in ("action", "all") and model.dimension == 1:
        checks += [
            ("L(x,v*)=0", lambda: check_zero_at_velocity(model, grid)),
            ("Fenchel inequality", lambda: check_fenchel(model, grid, seed=seed + 3, groups=20)),
            ("unique zero of L", lambda: check_strict_convexity(model, grid)),
            ("action quadrature", lambda: check_quadrature(model, grid)),
        ]
    if suite in ("containment", "all"):
        checks.append(("containment", lambda: check_containment(model)))
    return [_timed(name, fn) for name, fn in checks]


# --------------------------------------------------------------------------
# experiments


def lln_experiment(
    model: ModelDefinition,
    grid: CellGrid,
    epsilons=(0.1, 0.05, 0.02),
    path_count: int = 200,
    horizon: float = 5.0,
    seed: int = 0,
    x0=0.0,
):
    """Concentration of simulated paths around the zero-cost path.

    Passes when the mean sup-deviation strictly decreases with epsilon, the
    mean final displacement at the smallest epsilon lies within
    3 SEM + 0.05 of the reference displacement, and (when the reference
    moves) at least 90% of those paths move in the reference direction.
    """
    t0 = time.perf_counter()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    reference = zero_cost_path(model, grid, x0, horizon, dt=1e-2)
    ref_disp = reference.points[-1] - reference.points[0]
    summaries = []
    for eps in sorted(epsilons, reverse=True):
        cfg = SimulationConfig(
            epsilon=eps, horizon=horizon, master_seed=seed, path_count=path_count, initial_position=tuple(x0)
        )
        summary, _ = simulate_ensemble(model, cfg, reference)
        summaries.append(summary)
    devs = [float(np.mean(s.sup_deviation)) for s in summaries]
    decreasing = all(b < a for a, b in zip(devs, devs[1:]))
    last = summaries[-1]
    disp = last.final_positions - x0
    mean_disp = disp.mean(axis=0)
    sem = disp.std(axis=0, ddof=1) / math.sqrt(len(disp))
    allowed = 3 * sem + LLN_BIAS
    err = np.abs(mean_disp - ref_disp)
    within = bool(np.all(err <= allowed))
    moving = float(np.linalg.norm(ref_disp)) > 1e-9
    if moving:
        agree = float(np.mean(disp @ ref_disp > 0))
        sign_ok = agree >= SIGN_FRACTION
    else:
        agree, sign_ok = None, True
    ok = decreasing and within and sign_ok
    report = CheckReport(
        "law of large numbers concentration", ok,
        {
            "mean_sup_deviation": dict(zip(map(str, [s.epsilon for s in summaries]), devs)),
            "mean_displacement": mean_disp.tolist(),
            "reference_displacement": ref_disp.tolist(),
            "abs_error": err.tolist(),
            "sign_agreement": agree,
        },
        {"displacement": allowed.tolist(), "sign_agreement": SIGN_FRACTION},
        {"model": model.name, "grid": grid.points, "epsilons": [s.epsilon for s in summaries],
         "paths": path_count, "horizon": horizon, "seed": seed},
        f"sup-deviation {'decreasing' if decreasing else 'NOT decreasing'}; "
        f"displacement error {err.max():.3e} vs allowed {allowed.min():.3e}",
    )
    report.wall_time = time.perf_counter() - t0
    return report, summaries


def fig2_experiment(out_dir, seed: int = 0, model: ModelDefinition | None = None, grid: CellGrid | None = None,
                    horizon: float = 5.0, path_count: int = 100) -> CheckReport:
    """Single paths at eps in {0.5, 0.1, 0.02} plus a 100-path ensemble at 0.02."""
    from .modelspec.model import builtin_model

    t0 = time.perf_counter()
    model = builtin_model("fig2") if model is None else model
    grid = CellGrid.for_model(model) if grid is None else grid
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    vstar = lln_velocity(model, grid, 0.0)
    vstar_other = lln_velocity(model, grid, 1.3)
    for eps in (0.5, 0.1, 0.02):
        cfg = SimulationConfig(epsilon=eps, horizon=horizon, master_seed=seed, path_count=1)
        write_trajectory_csv(simulate_path(model, cfg, 0), out / f"fig2_eps{eps:g}.csv")
    cfg = SimulationConfig(epsilon=0.02, horizon=horizon, master_seed=seed, path_count=path_count)
    reference = PathSample(np.array([0.0, horizon]), np.array([[0.0], [horizon * vstar[0]]]))
    summary, _ = simulate_ensemble(model, cfg, reference)
    write_json(summary.to_dict(), out / "fig2_ensemble_eps0.02.json")
    disp = summary.final_positions[:, 0]
    agree = float(np.mean(np.sign(disp) == np.sign(vstar[0])))
    x_indep = float(abs(vstar[0] - vstar_other[0]))
    ok = agree >= SIGN_FRACTION and x_indep <= 1e-9
    rep = CheckReport(
        "staircase paths drift with the averaged velocity", ok,
        {"v_star": float(vstar[0]), "sign_agreement": agree, "v_star_x_dependence": x_indep},
        {"sign_agreement": SIGN_FRACTION, "v_star_x_dependence": 1e-9},
        {"model": model.name, "grid": grid.points, "seed": seed, "paths": path_count, "horizon": horizon,
         "out_dir": str(out)},
        f"{agree:.0%} of paths move in the direction of v*={vstar[0]:.6f}",
    )
    rep.wall_time = time.perf_counter() - t0
    return rep
