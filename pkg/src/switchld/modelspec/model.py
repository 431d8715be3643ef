"""Model definitions: potentials, switching rates and the derived drift field."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Mapping

import numpy as np
from scipy.sparse.csgraph import connected_components

from ..errors import ModelError
from ..reports import CheckReport
from .expression import (
    Expr,
    Num,
    add,
    compile_numpy,
    differentiate,
    fast_names,
    fold,
    locate_nonfinite,
    parse_expression,
    slow_names,
    substitute_params,
    to_source,
)

log = logging.getLogger(__name__)

RATE_EPS = 1e-12
NONNEG_TOL = 1e-12
PERIODICITY_TOL = 1e-9
GROWTH_BOUND = 1e3
DRIFT_SAFETY = 1.05

# validation grid
FAST_POINTS = 33
SLOW_POINTS = 17
SLOW_BOX = 2.0
# linear-growth heuristic grid
GROWTH_POINTS = 64
GROWTH_BOX = 10.0


@dataclass(frozen=True)
class ModelDefinition:
    """A switching diffusion on R^d x {1..J} with a P-periodic fast slot.

    ``drift[i][k]`` is the k-th component of g^i = grad_x psi^i + grad_y psi^i;
    the particle moves with velocity -g^i. ``rates[i][j]`` is r_ij (diagonal
    stored as 0). ``drift_sup_bound`` and ``max_rate`` are sampled on the
    validation grid.
    """

    name: str
    dimension: int
    states: int
    period: float
    potential: tuple[Expr, ...]
    rates: tuple[tuple[Expr, ...], ...]
    drift: tuple[tuple[Expr, ...], ...]
    slow_gradient: tuple[tuple[Expr, ...], ...]
    drift_sup_bound: float
    max_rate: float
    params: Mapping[str, float] = field(default_factory=dict, compare=False, hash=False)

    @property
    def slow_dependent(self) -> bool:
        """Whether drift or rates depend on the slow variable."""
        names = set(slow_names(self.dimension))
        exprs = [e for row in self.drift for e in row] + [e for row in self.rates for e in row]
        return any(names & e.variables() for e in exprs)

    @cached_property
    def _drift_fns(self):
        return [[compile_numpy(e, self.dimension) for e in row] for row in self.drift]

    @cached_property
    def _rate_fns(self):
        return [[compile_numpy(e, self.dimension) for e in row] for row in self.rates]

    @cached_property
    def _potential_fns(self):
        return [compile_numpy(e, self.dimension) for e in self.potential]

    def drift_at(self, slow, fast) -> np.ndarray:
        """g^i at broadcast points; returns shape ``(J, ..., d)``."""
        return np.stack(
            [np.stack([f(slow, fast) for f in row], axis=-1) for row in self._drift_fns]
        )

    def drift_of_state(self, state: int, slow, fast) -> np.ndarray:
        return np.stack([f(slow, fast) for f in self._drift_fns[state]], axis=-1)

    def rates_at(self, slow, fast) -> np.ndarray:
        """r_ij at broadcast points; returns shape ``(..., J, J)``, zero diagonal."""
        return np.stack([self.rate_row(i, slow, fast) for i in range(self.states)], axis=-2)

    def rate_row(self, state: int, slow, fast) -> np.ndarray:
        J = self.states
        shape = np.broadcast_shapes(np.shape(slow)[:-1], np.shape(fast)[:-1])
        return np.stack(
            [np.zeros(shape) if j == state else self._rate_fns[state][j](slow, fast) for j in range(J)],
            axis=-1,
        )

    def potential_at(self, slow, fast) -> np.ndarray:
        return np.stack([f(slow, fast) for f in self._potential_fns])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "dimension": self.dimension,
            "states": self.states,
            "period": self.period,
            "potential": [to_source(e) for e in self.potential],
            "rates": [[to_source(e) for e in row] for row in self.rates],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# --------------------------------------------------------------------------
# grids


def validation_points(dimension: int, period: float) -> tuple[np.ndarray, np.ndarray]:
    """All (slow, fast) pairs of the validation grid, each of shape (M, d)."""
    slow_axis = np.linspace(-SLOW_BOX, SLOW_BOX, SLOW_POINTS)
    fast_axis = np.arange(FAST_POINTS) * (period / FAST_POINTS)
    return _product_points(dimension, slow_axis, fast_axis)


def _product_points(dimension, slow_axis, fast_axis):
    axes = [slow_axis] * dimension + [fast_axis] * dimension
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = np.stack([m.ravel() for m in mesh], axis=-1)
    return flat[:, :dimension], flat[:, dimension:]


# --------------------------------------------------------------------------
# construction


def _parse(src, dimension, params, what) -> Expr:
    if isinstance(src, Expr):
        return fold(src)
    if isinstance(src, (int, float)):
        src = repr(float(src))
    if not isinstance(src, str):
        raise ModelError(f"{what}: expected an expression string, got {type(src).__name__}")
    try:
        return fold(parse_expression(substitute_params(src, params), dimension))
    except ModelError as exc:
        raise ModelError(f"{what}: {exc}", invariant="syntax") from None


def build_model(
    name: str,
    dimension: int,
    states: int,
    period: float,
    potential,
    rates,
    params: Mapping[str, float] | None = None,
) -> ModelDefinition:
    """Parse and differentiate a model without validating it."""
    params = dict(params or {})
    if dimension not in (1, 2):
        raise ModelError(f"dimension must be 1 or 2, got {dimension}", invariant="dimension")
    if not isinstance(states, int) or states < 1:
        raise ModelError(f"states must be a positive integer, got {states}", invariant="states")
    period = float(period)
    if not (period > 0 and math.isfinite(period)):
        raise ModelError(f"period must be positive, got {period}", invariant="period")
    if len(potential) != states:
        raise ModelError(f"expected {states} potentials, got {len(potential)}", invariant="shape")
    if len(rates) != states or any(len(row) != states for row in rates):
        raise ModelError(f"rates must be a {states}x{states} array", invariant="shape")

    pot = tuple(_parse(src, dimension, params, f"potential[{i}]") for i, src in enumerate(potential))
    rate_rows = []
    for i, row in enumerate(rates):
        parsed = []
        for j, src in enumerate(row):
            e = _parse(src, dimension, params, f"rates[{i}][{j}]")
            if i == j:
                if e != Num(0.0):
                    raise ModelError(f"diagonal rate rates[{i}][{i}] must be \"0\"", invariant="shape")
                e = Num(0.0)
            parsed.append(e)
        rate_rows.append(tuple(parsed))

    slows, fasts = slow_names(dimension), fast_names(dimension)
    slow_grad = tuple(tuple(differentiate(e, v) for v in slows) for e in pot)
    drift = tuple(
        tuple(add(gx, differentiate(e, v)) for gx, v in zip(gxs, fasts)) for e, gxs in zip(pot, slow_grad)
    )
    model = ModelDefinition(
        name=name,
        dimension=dimension,
        states=states,
        period=period,
        potential=pot,
        rates=tuple(rate_rows),
        drift=drift,
        slow_gradient=slow_grad,
        drift_sup_bound=0.0,
        max_rate=0.0,
        params=params,
    )
    slow, fast = validation_points(dimension, period)
    g = model.drift_at(slow, fast)
    gnorm = np.linalg.norm(g, axis=-1)
    r = model.rates_at(slow, fast)
    g_sup = float(np.max(gnorm[np.isfinite(gnorm)], initial=0.0))
    r_max = float(np.max(r[np.isfinite(r)], initial=0.0))
    object.__setattr__(model, "drift_sup_bound", DRIFT_SAFETY * g_sup)
    object.__setattr__(model, "max_rate", max(r_max, 0.0))
    return model


def _read_document(source) -> dict:
    if isinstance(source, Mapping):
        return dict(source)
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        source = Path(source).read_text()
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid model JSON: {exc}", invariant="syntax") from None
    if not isinstance(doc, dict):
        raise ModelError("model JSON must be an object", invariant="syntax")
    return doc


def load_model(source) -> ModelDefinition:
    """Load, differentiate and validate a model from a JSON path, text or dict.

    Raises ModelError naming the violated invariant and a witness point when
    rates are negative, a potential is not periodic in the fast slot, the
    switching graph is reducible or an expression is non-finite on the
    validation grid. The linear-growth heuristic only logs a warning.
    """
    doc = _read_document(source)
    missing = [k for k in ("dimension", "states", "potential", "rates") if k not in doc]
    if missing:
        raise ModelError(f"model is missing keys: {', '.join(missing)}", invariant="schema")
    params = doc.get("params") or {}
    if not isinstance(params, Mapping):
        raise ModelError("params must be an object", invariant="schema")
    period = doc.get("period", 1.0)
    if isinstance(period, str):
        period = _parse(period, 1, params, "period")
        if period.variables():
            raise ModelError("period must be a constant", invariant="period")
        period = fold(period).value
    model = build_model(
        name=str(doc.get("name", "model")),
        dimension=doc["dimension"],
        states=doc["states"],
        period=period,
        potential=doc["potential"],
        rates=doc["rates"],
        params=params,
    )
    for report in validate_model(model):
        if report.passed:
            continue
        if report.name == "linear-growth":
            log.warning("model %s: linear-growth heuristic failed: %s", model.name, report.message)
            continue
        raise ModelError(
            f"model {model.name!r} failed {report.name}: {report.message}",
            invariant=report.name,
            witness=report.context.get("witness"),
        )
    return model


# --------------------------------------------------------------------------
# validation


def _witness(slow, fast, idx, **extra) -> dict:
    out = {"slow": slow[idx].tolist(), "fast": fast[idx].tolist()}
    out.update(extra)
    return out


def _finite_check(m: ModelDefinition, slow, fast) -> CheckReport:
    exprs = [(f"potential[{i}]", e) for i, e in enumerate(m.potential)]
    exprs += [(f"drift[{i}][{k}]", e) for i, row in enumerate(m.drift) for k, e in enumerate(row)]
    exprs += [
        (f"rates[{i}][{j}]", e) for i, row in enumerate(m.rates) for j, e in enumerate(row) if i != j
    ]
    for label, e in exprs:
        vals = compile_numpy(e, m.dimension)(slow, fast)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            k = bad[0]
            err = locate_nonfinite(e, slow[k], fast[k])
            detail = str(err) if err else "non-finite value"
            return CheckReport(
                "finite", False, 0.0, 0.0,
                {"expression": label, "witness": _witness(slow, fast, k)},
                f"{label}: {detail}",
            )
    return CheckReport("finite", True, 0.0, 0.0, {}, "all expressions finite on the validation grid")


def _nonneg_check(m, slow, fast) -> CheckReport:
    r = m.rates_at(slow, fast)
    r = np.where(np.isfinite(r), r, np.inf)
    worst = float(r.min())
    ok = worst >= -NONNEG_TOL
    ctx = {}
    msg = f"min rate {worst:.3e}"
    if not ok:
        k, i, j = np.unravel_index(int(np.argmin(r)), r.shape)
        ctx["witness"] = _witness(slow, fast, k, i=int(i) + 1, j=int(j) + 1)
        msg = f"rate r_{i + 1}{j + 1} = {worst:.3e} < 0"
    return CheckReport("nonnegative-rates", ok, worst, -NONNEG_TOL, ctx, msg)


def _periodicity_check(m, slow, fast) -> CheckReport:
    psi = m.potential_at(slow, fast)
    worst = 0.0
    ctx = {}
    for k in range(m.dimension):
        shifted = fast.copy()
        shifted[:, k] += m.period
        with np.errstate(invalid="ignore"):
            diff = np.abs(m.potential_at(slow, shifted) - psi)
        diff = np.where(np.isfinite(diff), diff, np.inf)
        if diff.max() > worst:
            worst = float(diff.max())
            i, idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
            ctx = {"witness": _witness(slow, fast, idx, state=int(i) + 1, direction=k + 1)}
    ok = worst <= PERIODICITY_TOL
    msg = f"max |psi(x, y+P e_k) - psi(x, y)| = {worst:.3e}"
    return CheckReport("periodicity", ok, worst, PERIODICITY_TOL, ctx if not ok else {}, msg)


def switching_graph(m: ModelDefinition, slow=None, fast=None) -> np.ndarray:
    """Boolean adjacency i->j where r_ij exceeds the threshold somewhere."""
    if slow is None:
        slow, fast = validation_points(m.dimension, m.period)
    r = m.rates_at(slow, fast)
    r = np.where(np.isfinite(r), r, 0.0)
    adj = r.max(axis=0) > RATE_EPS
    np.fill_diagonal(adj, False)
    return adj


def is_irreducible(adjacency: np.ndarray) -> bool:
    if adjacency.shape[0] == 1:
        return True
    n, _ = connected_components(adjacency.astype(float), directed=True, connection="strong")
    return n == 1


def _irreducibility_check(m, slow, fast) -> CheckReport:
    adj = switching_graph(m, slow, fast)
    ok = is_irreducible(adj)
    edges = [[int(i) + 1, int(j) + 1] for i, j in zip(*np.nonzero(adj))]
    ctx = {"edges": edges}
    if ok:
        msg = "switching graph strongly connected"
    else:
        _, labels = connected_components(adj.astype(float), directed=True, connection="strong")
        groups = {}
        for state, lab in enumerate(labels):
            groups.setdefault(int(lab), []).append(state + 1)
        ctx["witness"] = {"components": list(groups.values())}
        msg = f"reducible switching graph, strongly connected components {list(groups.values())}"
    return CheckReport("irreducibility", ok, len(edges), None, ctx, msg)


def _growth_check(m, bound=GROWTH_BOUND) -> CheckReport:
    d = m.dimension
    slow_axis = np.linspace(-GROWTH_BOX, GROWTH_BOX, GROWTH_POINTS)
    fast_axis = np.arange(GROWTH_POINTS) * (m.period / GROWTH_POINTS)
    fast_mesh = np.stack(
        [a.ravel() for a in np.meshgrid(*([fast_axis] * d), indexing="ij")], axis=-1
    )
    slow_mesh = np.stack(
        [a.ravel() for a in np.meshgrid(*([slow_axis] * d), indexing="ij")], axis=-1
    )
    fns = [[compile_numpy(e, d) for e in row] for row in m.slow_gradient]
    worst, where = 0.0, None
    for s in slow_mesh:
        sl = np.broadcast_to(s, fast_mesh.shape)
        for i, row in enumerate(fns):
            grad = np.stack([f(sl, fast_mesh) for f in row], axis=-1)
            norm = np.linalg.norm(grad, axis=-1)
            norm = np.where(np.isfinite(norm), norm, np.inf)
            k = int(np.argmax(norm))
            if norm[k] > worst or where is None:
                worst = float(norm[k])
                where = {"slow": s.tolist(), "fast": fast_mesh[k].tolist(), "state": i + 1}
    ok = worst <= bound
    msg = f"max |grad_x psi| over [-{GROWTH_BOX:g},{GROWTH_BOX:g}]^{d} = {worst:.3e}"
    return CheckReport("linear-growth", ok, worst, bound, {} if ok else {"witness": where}, msg)


def validate_model(m: ModelDefinition) -> list[CheckReport]:
    """Run every structural check and report each outcome (never raises)."""
    slow, fast = validation_points(m.dimension, m.period)
    checks = [
        lambda: _finite_check(m, slow, fast),
        lambda: _nonneg_check(m, slow, fast),
        lambda: _periodicity_check(m, slow, fast),
        lambda: _irreducibility_check(m, slow, fast),
        lambda: _growth_check(m),
    ]
    reports = []
    for check in checks:
        t0 = time.perf_counter()
        rep = check()
        rep.wall_time = time.perf_counter() - t0
        rep.context.setdefault("model", m.name)
        reports.append(rep)
    return reports


# --------------------------------------------------------------------------
# builtins

BUILTINS = ("free", "gradient", "fig2")


def builtin_document(name: str, **params: Any) -> dict:
    if name == "free":
        return {
            "name": "free",
            "dimension": 1,
            "states": 2,
            "period": 1.0,
            "potential": ["0", "0"],
            "rates": [["0", "1"], ["1", "0"]],
        }
    if name == "gradient":
        return {
            "name": "gradient",
            "dimension": 1,
            "states": 1,
            "period": 1.0,
            "potential": ["a*x"],
            "rates": [["0"]],
            "params": {"a": float(params.get("a", 1.0))},
        }
    if name == "fig2":
        off = [["0", "1", "0", "0"], ["0", "0", "1", "0"], ["0", "0", "0", "1"], ["1", "0", "0", "0"]]
        return {
            "name": "fig2",
            "dimension": 1,
            "states": 4,
            "period": 2 * math.pi,
            "potential": ["sin(y)", "cos(y)", "-sin(y)", "-cos(y)"],
            "rates": off,
        }
    raise ModelError(f"unknown builtin model {name!r}; choose one of {', '.join(BUILTINS)}")


def builtin_model(name: str, **params: Any) -> ModelDefinition:
    """``free``, ``gradient`` (parameter ``a``, default 1) or ``fig2``."""
    return load_model(builtin_document(name, **params))
