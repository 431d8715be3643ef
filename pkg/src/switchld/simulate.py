"""Monte Carlo simulation of the rescaled switching diffusion.

Each step applies Euler-Maruyama to the position,

    Y <- Y - g^i(Y, Y/eps mod P) dt + sqrt(eps dt) N(0, I),

then switches state with probability 1 - exp(-Lambda dt), where
Lambda = eps^-1 sum_{j != i} r_ij(Y, Y/eps mod P), to a target chosen in
proportion to r_ij.

Per-path random streams come from ``numpy.random.SeedSequence(master_seed,
spawn_key=(path_index,))`` feeding a PCG64 generator. Each path draws its
normals and uniforms in fixed-size blocks, so a path's trajectory does not
depend on which other paths share its batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PathError, SimulationError
from .modelspec.model import ModelDefinition

BLOCK = 1024
BATCH = 256
JUMP_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class SimulationConfig:
    epsilon: float
    horizon: float
    master_seed: int = 0
    path_count: int = 1
    initial_position: tuple[float, ...] = (0.0,)
    initial_state: int = 1
    record_stride: int = 1
    dt_safety: float = 0.05
    dt_cap: float = 1e-3

    def __post_init__(self):
        pos = tuple(float(v) for v in np.atleast_1d(self.initial_position))
        object.__setattr__(self, "initial_position", pos)
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0 < self.dt_safety <= 0.1:
            raise ValueError("dt_safety must lie in (0, 0.1]")
        if not self.dt_cap > 0:
            raise ValueError("dt_cap must be positive")
        if self.path_count < 1:
            raise ValueError("path_count must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if not all(math.isfinite(v) for v in pos):
            raise ValueError("initial position must be finite")

    def max_intensity(self, model: ModelDefinition) -> float:
        """Lambda_max = J * (largest sampled rate)."""
        return model.states * model.max_rate

    def time_grid(self, model: ModelDefinition) -> tuple[float, int]:
        """Step size and number of steps; dt <= min(dt_cap, dt_safety * eps / Lambda_max)."""
        lam = self.max_intensity(model)
        dt = self.dt_cap if lam <= 0 else min(self.dt_cap, self.dt_safety * self.epsilon / lam)
        steps = max(1, math.ceil(self.horizon / dt - 1e-9))
        return self.horizon / steps, steps


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    positions: np.ndarray  # (K, d)
    states: np.ndarray  # 1-based
    jump_count: int
    max_jump_probability: float = 0.0

    @property
    def displacement(self) -> np.ndarray:
        return self.positions[-1] - self.positions[0]

    def occupation(self, states: int) -> np.ndarray:
        """Fraction of recorded time intervals spent in each state (left-point rule)."""
        dt = np.diff(self.times)
        occ = np.bincount(self.states[:-1] - 1, weights=dt, minlength=states)
        return occ / dt.sum()


@dataclass(frozen=True, eq=False)
class PathSample:
    """Piecewise-linear path through ``points`` at strictly increasing ``times``."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        x = np.asarray(self.points, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != t.size:
            raise PathError("times and points differ in length")
        if t.size < 1:
            raise PathError("path needs at least one point")
        if t[0] != 0.0:
            raise PathError("path must start at t = 0")
        if np.any(np.diff(t) <= 0):
            raise PathError("path times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise PathError("path must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", x)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def at(self, t) -> np.ndarray:
        """Linear interpolation at times ``t`` (must lie inside the sampled range)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if t.min() < self.times[0] or t.max() > self.times[-1] * (1 + 1e-12) + 1e-300:
            raise PathError(
                f"reference covers [{self.times[0]}, {self.times[-1]}], "
                f"requested [{t.min()}, {t.max()}]"
            )
        return np.stack([np.interp(t, self.times, self.points[:, k]) for k in range(self.dimension)], axis=-1)


@dataclass(frozen=True, eq=False)
class EnsembleSummary:
    epsilon: float
    path_count: int
    times: np.ndarray
    mean: np.ndarray  # (K, d)
    sem: np.ndarray  # (K, d)
    mean_jump_count: float
    sup_deviation: np.ndarray | None = None
    final_positions: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = self.mean.shape[1]
        return {
            "schema": "switchld.ensemble_summary/1",
            "epsilon": self.epsilon,
            "path_count": self.path_count,
            "dimension": d,
            "mean_jump_count": self.mean_jump_count,
            "times": self.times.tolist(),
            "mean": self.mean.tolist(),
            "sem": self.sem.tolist(),
            "sup_deviation": None if self.sup_deviation is None else self.sup_deviation.tolist(),
        }


# --------------------------------------------------------------------------


def path_generator(master_seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(path_index,))))


def _simulate_batch(model: ModelDefinition, cfg: SimulationConfig, indices: np.ndarray):
    d, J, eps, P = model.dimension, model.states, cfg.epsilon, model.period
    if len(cfg.initial_position) != d:
        raise ValueError(f"initial position must have {d} components")
    if not 1 <= cfg.initial_state <= J:
        raise ValueError(f"initial state must lie in 1..{J}")
    dt, steps = cfg.time_grid(model)
    noise = math.sqrt(eps * dt)
    B = len(indices)
    gens = [path_generator(cfg.master_seed, int(i)) for i in indices]

    record = list(range(0, steps + 1, cfg.record_stride))
    if record[-1] != steps:
        record.append(steps)
    rec_pos = np.empty((len(record), B, d))
    rec_state = np.empty((len(record), B), dtype=np.int64)

    y = np.tile(np.array(cfg.initial_position), (B, 1))
    state = np.full(B, cfg.initial_state - 1, dtype=np.int64)
    jumps = np.zeros(B, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    rows = np.arange(B)
    max_prob_arg = np.zeros(B)
    rec_pos[0], rec_state[0] = y, state
    r_i = 1

    normals = uniforms = None
    for step in range(1, steps + 1):
        slot = (step - 1) % BLOCK
        if slot == 0:
            normals = np.stack([g.standard_normal((BLOCK, d)) for g in gens], axis=1)
            uniforms = np.stack([g.random((BLOCK, 2)) for g in gens], axis=1)

        fast = np.mod(y / eps, P)
        drift = np.zeros((B, d))
        for i in range(J):
            sel = state == i
            if sel.any():
                drift[sel] = model.drift_of_state(i, y[sel], fast[sel])
        if not np.all(np.isfinite(drift)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(drift), axis=1))[0])
            raise SimulationError(
                f"non-finite drift at t={step * dt:.6g}, position {y[bad].tolist()}, state {state[bad] + 1}",
                int(indices[bad]),
            )
        y = y - drift * dt + noise * normals[slot]

        fast = np.mod(y / eps, P)
        row = np.zeros((B, J))
        for i in range(J):
            sel = state == i
            if sel.any():
                row[sel] = model.rate_row(i, y[sel], fast[sel])
        if not np.all(np.isfinite(row)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(row), axis=1))[0])
            raise SimulationError(f"non-finite rate at position {y[bad].tolist()}", int(indices[bad]))
        total = row.sum(axis=1)
        arg = total * dt / eps
        np.maximum(max_prob_arg, arg, out=max_prob_arg)
        if np.any(arg > cfg.dt_safety * (1 + JUMP_BOUND_SLACK)):
            bad = int(np.argmax(arg))
            raise SimulationError(
                f"jump intensity {total[bad] / eps:.4g} exceeds the sampled bound; Lambda*dt = {arg[bad]:.4g}",
                int(indices[bad]),
            )
        u = uniforms[slot]
        jump = u[:, 0] < -np.expm1(-arg)
        if jump.any():
            cum = np.cumsum(row[jump], axis=1)
            target = (cum < (u[jump, 1] * total[jump])[:, None]).sum(axis=1)
            state[jump] = np.minimum(target, J - 1)
            jumps[jump] += 1
        if r_i < len(record) and record[r_i] == step:
            rec_pos[r_i], rec_state[r_i] = y, state
            r_i += 1

    times = np.array(record, dtype=float) * dt
    return times, rec_pos, rec_state + 1, jumps, max_prob_arg


def simulate_path(model: ModelDefinition, cfg: SimulationConfig, path_index: int = 0) -> Trajectory:
    """Simulate path ``path_index`` of the ensemble defined by ``cfg``."""
    times, pos, st, jumps, prob = _simulate_batch(model, cfg, np.array([path_index]))
    return Trajectory(times, pos[:, 0, :], st[:, 0], int(jumps[0]), float(prob[0]))


def simulate_paths(model: ModelDefinition, cfg: SimulationConfig, indices=None) -> list[Trajectory]:
    """Simulate paths in index order, batched; each path uses its own stream."""
    indices = np.arange(cfg.path_count) if indices is None else np.asarray(indices)
    out = []
    for start in range(0, len(indices), BATCH):
        chunk = indices[start : start + BATCH]
        times, pos, st, jumps, prob = _simulate_batch(model, cfg, chunk)
        for b in range(len(chunk)):
            out.append(Trajectory(times, pos[:, b, :], st[:, b], int(jumps[b]), float(prob[b])))
    return out


def sup_deviation(traj: Trajectory, ref: PathSample) -> float:
    """max over the trajectory's sample times of |position - reference(t)|."""
    if traj.times[-1] > ref.times[-1] * (1 + 1e-12) or traj.times[0] < ref.times[0]:
        raise PathError(
            f"reference covers [{ref.times[0]}, {ref.times[-1]}] but trajectory runs to {traj.times[-1]}"
        )
    diff = traj.positions - ref.at(np.minimum(traj.times, ref.times[-1]))
    return float(np.max(np.linalg.norm(diff, axis=1)))


def summarize(trajectories: list[Trajectory], epsilon: float, reference: PathSample | None = None) -> EnsembleSummary:
    """Per-time mean/SEM (accumulated in path-index order) and sup-deviations."""
    pos = np.stack([t.positions for t in trajectories])  # (paths, K, d)
    n = pos.shape[0]
    mean = pos.mean(axis=0)
    sem = pos.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros_like(mean)
    dev = None
    if reference is not None:
        dev = np.array([sup_deviation(t, reference) for t in trajectories])
    return EnsembleSummary(
        epsilon=epsilon,
        path_count=n,
        times=trajectories[0].times,
        mean=mean,
        sem=sem,
        mean_jump_count=float(np.mean([t.jump_count for t in trajectories])),
        sup_deviation=dev,
        final_positions=pos[:, -1, :],
    )


def simulate_ensemble(
    model: ModelDefinition, cfg: SimulationConfig, reference: PathSample | None = None
) -> tuple[EnsembleSummary, list[Trajectory]]:
    """Run ``cfg.path_count`` paths and summarise them."""
    trajs = simulate_paths(model, cfg)
    return summarize(trajs, cfg.epsilon, reference), trajs


def constant_path(x0, horizon: float) -> PathSample:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    return PathSample(np.array([0.0, horizon]), np.stack([x0, x0]))


def linear_path(x0, velocity, horizon: float) -> PathSample:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v = np.atleast_1d(np.asarray(velocity, dtype=float))
    return PathSample(np.array([0.0, horizon]), np.stack([x0, x0 + horizon * v]))
