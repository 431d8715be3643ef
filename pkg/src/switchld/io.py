"""CSV/JSON readers and writers for the data files the CLI produces."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import PathError
from .reports import jsonable
from .simulate import PathSample, Trajectory


def _fmt(v) -> str:
    return repr(float(v))


def _axis_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{k + 1}" for k in range(d)]


def write_trajectory_csv(traj: Trajectory, path) -> None:
    d = traj.positions.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *_axis_names("y", d), "state"])
        for t, y, s in zip(traj.times, traj.positions, traj.states):
            w.writerow([_fmt(t), *map(_fmt, y), int(s)])


def read_trajectory_csv(path) -> Trajectory:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    states = data[:, -1].astype(np.int64)
    return Trajectory(data[:, 0], data[:, 1:-1], states, int(np.count_nonzero(np.diff(states))))


def hamiltonian_rows_csv(rows, d: int, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([*_axis_names("x", d), *_axis_names("p", d), "H"])
    for x, p, H in rows:
        w.writerow([*map(_fmt, x), *map(_fmt, p), _fmt(H)])


def measure_csv(weights: np.ndarray, grid, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow([*_axis_names("y", grid.dimension), "state", "weight"])
    pts = grid.fast_points()
    for row, weight in enumerate(weights):
        k, state = divmod(row, grid.cells)[::-1]
        w.writerow([*map(_fmt, pts[k]), state + 1, _fmt(weight)])


def read_path_csv(path) -> PathSample:
    """PathSample from a CSV with header ``t,x1[,x2]``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PathError(f"{path}: empty path file") from None
        if not header or header[0] != "t" or len(header) not in (2, 3):
            raise PathError(f"{path}: expected header t,x1[,x2], got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise PathError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise PathError(f"{path}:{lineno}: non-numeric value") from None
    if not rows:
        raise PathError(f"{path}: no path points")
    arr = np.array(rows)
    return PathSample(arr[:, 0], arr[:, 1:])


def write_path_csv(path_sample: PathSample, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *_axis_names("x", path_sample.dimension)])
        for t, x in zip(path_sample.times, path_sample.points):
            w.writerow([_fmt(t), *map(_fmt, x)])


def write_json(doc, path) -> None:
    text = json.dumps(jsonable(doc), indent=2) + "\n"
    if path is None or str(path) == "-":
        import sys

        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
