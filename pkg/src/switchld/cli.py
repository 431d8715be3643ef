"""Command-line interface: ``switchld <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or model, 2 numerical failure
(including failed verification checks), 3 I/O error.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .action import path_action, zero_cost_path
from .errors import ModelError, NumericalError, PathError
from .io import hamiltonian_rows_csv, measure_csv, read_path_csv, write_json, write_trajectory_csv
from .modelspec.model import BUILTINS, builtin_model, load_model
from .reports import dump_reports
from .simulate import SimulationConfig, simulate_ensemble
from .spectral.cell import CellGrid
from .spectral.hamiltonian import hamiltonian, lln_velocity, stationary_measure
from .verify import SUITES, fig2_experiment, lln_experiment, run_check_suite

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
VERIFY_CHOICES = SUITES + ("lln", "fig2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {text!r}") from None
        if not (v > 0 and math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def _finite(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be finite, got {text}")
    return v


def _point(text):
    try:
        vals = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not 1 <= len(vals) <= 2 or not all(math.isfinite(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected 1 or 2 finite components, got {text!r}")
    return vals


def _seed(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2^64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    src = common.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", metavar="FILE", help="model definition JSON file")
    src.add_argument("--builtin", choices=BUILTINS, help="built-in model")
    common.add_argument("--grid", type=_positive(int), metavar="N", help="grid points per fast axis")
    common.add_argument("--out", metavar="PATH", help="output file or directory (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = _Parser(prog="switchld", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="simulate paths of the rescaled process")
    p.add_argument("--epsilon", type=_positive(float), required=True)
    p.add_argument("--paths", type=_positive(int), default=1)
    p.add_argument("--horizon", type=_positive(float), default=5.0)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--x", type=_point, help="initial position (default: origin)")
    p.add_argument("--dt", type=_positive(float), default=1e-2, help="recording interval, at most 0.01")

    p = sub.add_parser("hamiltonian", parents=[common], help="tabulate H(x, p) over a momentum grid")
    p.add_argument("--x", type=_point, help="slow position (default: origin)")
    p.add_argument("--p-min", type=_finite, default=-2.0)
    p.add_argument("--p-max", type=_finite, default=2.0)
    p.add_argument("--p-steps", type=_positive(int), default=41)

    p = sub.add_parser("velocity", parents=[common], help="averaged velocity and stationary measure")
    p.add_argument("--x", type=_point)

    p = sub.add_parser("action", parents=[common], help="action of a path given as CSV t,x1[,x2]")
    p.add_argument("path", metavar="PATH_CSV")

    p = sub.add_parser("verify", parents=[common], help="run property suites or experiments")
    p.add_argument("--suite", choices=VERIFY_CHOICES, default="all")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--paths", type=_positive(int), default=200)
    p.add_argument("--horizon", type=_positive(float), default=5.0)
    p.add_argument("--epsilon", type=_positive(float), action="append",
                   help="epsilon for the lln experiment (repeatable)")
    return parser


# --------------------------------------------------------------------------


def _model_and_grid(args):
    model = builtin_model(args.builtin) if args.builtin else load_model(args.model)
    grid = CellGrid.for_model(model, args.grid)
    return model, grid


def _x(args, model):
    if args.x is None:
        return np.zeros(model.dimension)
    x = np.array(args.x)
    if x.size != model.dimension:
        raise ModelError(f"--x has {x.size} components but the model has dimension {model.dimension}")
    return x


@contextlib.contextmanager
def _sink(path):
    if path is None or path == "-":
        buf = io.StringIO()
        yield buf
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def cmd_simulate(args) -> int:
    model, grid = _model_and_grid(args)
    if args.dt > 1e-2:
        raise ModelError("--dt must not exceed 0.01")
    x0 = _x(args, model)
    probe = SimulationConfig(epsilon=args.epsilon, horizon=args.horizon)
    dt_sim, _ = probe.time_grid(model)
    cfg = SimulationConfig(
        epsilon=args.epsilon,
        horizon=args.horizon,
        master_seed=args.seed,
        path_count=args.paths,
        initial_position=tuple(x0),
        record_stride=max(1, round(args.dt / dt_sim)),
    )
    reference = zero_cost_path(model, grid, x0, args.horizon, dt=args.dt)
    summary, trajs = simulate_ensemble(model, cfg, reference)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    width = max(5, len(str(args.paths - 1)))
    for k, traj in enumerate(trajs):
        write_trajectory_csv(traj, out / f"path_{k:0{width}d}.csv")
    doc = summary.to_dict()
    doc["seed"] = args.seed
    doc["model"] = model.name
    doc["reference"] = "zero-cost path"
    write_json(doc, out / "summary.json")
    print(f"wrote {len(trajs)} trajectories and summary.json to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_hamiltonian(args) -> int:
    model, grid = _model_and_grid(args)
    if args.p_max < args.p_min:
        raise ModelError("--p-max must not be below --p-min")
    x = _x(args, model)
    axis = np.linspace(args.p_min, args.p_max, args.p_steps)
    rows = []
    for p in np.array(np.meshgrid(*([axis] * model.dimension), indexing="ij")).reshape(model.dimension, -1).T:
        rows.append((x, p, hamiltonian(model, grid, x, p)))
    with _sink(args.out) as fh:
        if args.format == "json":
            json.dump(
                {
                    "schema": "switchld.hamiltonian_table/1",
                    "model": model.name,
                    "grid": grid.points,
                    "rows": [{"x": x.tolist(), "p": p.tolist(), "H": H} for x, p, H in rows],
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        else:
            hamiltonian_rows_csv(rows, model.dimension, fh)
    return EXIT_OK


def cmd_velocity(args) -> int:
    model, grid = _model_and_grid(args)
    x = _x(args, model)
    v = lln_velocity(model, grid, x)
    mu = stationary_measure(model, grid, x)
    if args.format == "json":
        doc = {
            "schema": "switchld.velocity/1",
            "model": model.name,
            "grid": grid.points,
            "x": x.tolist(),
            "v_star": v.tolist(),
            "state_marginal": mu.state_marginal().tolist(),
            "measure": mu.weights.tolist(),
        }
        write_json(doc, args.out)
        return EXIT_OK
    d = model.dimension
    header = ",".join([f"x{k + 1}" for k in range(d)] + [f"v{k + 1}" for k in range(d)])
    sys.stdout.write(header + "\n" + ",".join(repr(float(a)) for a in [*x, *v]) + "\n")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            measure_csv(mu.weights, grid, fh)
    else:
        sys.stdout.write("\n")
        measure_csv(mu.weights, grid, sys.stdout)
    return EXIT_OK


def cmd_action(args) -> int:
    model, grid = _model_and_grid(args)
    path = read_path_csv(args.path)
    if model.dimension != 1:
        raise ModelError("the action is available for one-dimensional models only")
    report = path_action(model, grid, path)
    doc = report.to_dict()
    doc["model"] = model.name
    doc["grid"] = grid.points
    write_json(doc, args.out)
    print(f"total action {report.total_action:.10g}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    model, grid = _model_and_grid(args)
    if args.suite == "fig2":
        out = Path(args.out or "fig2_out")
        reports = [fig2_experiment(out, seed=args.seed, model=model, grid=grid)]
        report_path = out / "report.json"
    elif args.suite == "lln":
        eps = tuple(args.epsilon) if args.epsilon else (0.1, 0.05, 0.02)
        rep, _ = lln_experiment(model, grid, eps, args.paths, args.horizon, args.seed)
        reports = [rep]
        report_path = args.out
    else:
        reports = run_check_suite(model, grid, args.suite, seed=args.seed)
        report_path = args.out
    for r in reports:
        print(r.line(), file=sys.stderr)
    text = dump_reports(reports)
    if report_path is None or str(report_path) == "-":
        sys.stdout.write(text)
    else:
        Path(report_path).write_text(text)
    failed = sum(not r.passed for r in reports)
    print(f"{len(reports) - failed}/{len(reports)} checks passed", file=sys.stderr)
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


COMMANDS = {
    "simulate": cmd_simulate,
    "hamiltonian": cmd_hamiltonian,
    "velocity": cmd_velocity,
    "action": cmd_action,
    "verify": cmd_verify,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ModelError, PathError, NotImplementedError, ValueError) as exc:
        code, err = EXIT_INPUT, exc
    except NumericalError as exc:
        code, err = EXIT_NUMERIC, exc
    except OSError as exc:
        code, err = EXIT_IO, exc
    print(f"switchld {args.command}: {type(err).__name__}: {err}", file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())
