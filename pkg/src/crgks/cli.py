"""Command-line front end: ``gen``, ``solve`` and ``experiment``.

Settings are resolved in order: explicit flags, then keys of the optional
JSON file given by ``--config`` (named like the long flags, without
dashes), then the method presets in :mod:`crgks.methods`.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path


from . import __version__
from .fileio import format_float, write_json, write_pgm, write_rows, write_vector_csv
from .methods import METHODS, iters_to_within, method_config, parse_method, run_method
from .operators import vector_to_image
from .problems import EXPERIMENTS, InverseProblem, make_experiment
from .solver import CRResult, SolverConfig, SolverWarning

__all__ = ["RunSpec", "main", "build_parser", "cmd_gen", "cmd_solve", "cmd_experiment"]

# flag name -> SolverConfig field
CONFIG_FLAGS = {
    "q": "q",
    "s": "s",
    "kmin": "k_min",
    "kmax": "k_max",
    "epsilon": "epsilon",
    "tau": "tau",
    "budget": "total_budget",
    "nouter": "n_outer",
    "tol": "inner_tol",
    "rule": "param_rule",
    "cycles": "max_cycles",
    "compression": "compression",
}
RUN_FLAGS = ("experiment", "method", "scale", "seed", "out", "figures", "mtx")
DEFAULTS = {"experiment": "exp1", "method": "cr-l1", "seed": 0, "figures": True, "mtx": False}

SUMMARY_HEADER = (
    "experiment",
    "method",
    "seed",
    "final_rre",
    "total_iters",
    "iters_to_within_10pct_of_final",
    "outer_iters",
    "final_lambda",
    "status",
)
TABLE_HEADER = ("method", "final_rre", "total_iters", "iters_to_within_10pct_of_final", "status")


@dataclass
class RunSpec:
    experiment: str = "exp1"
    method: str = "cr-l1"
    overrides: dict = field(default_factory=dict)
    scale: int | None = None
    seed: int = 0
    out: Path = Path("out")
    figures: bool = True
    mtx: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        parse_method(self.method)
        unknown = set(self.overrides) - set(CONFIG_FLAGS.values())
        if unknown:
            raise ValueError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        self.out = Path(self.out)

    def config(self, method: str | None = None) -> SolverConfig:
        return method_config(method or self.method, self.experiment, **self.overrides)


# ---------------------------------------------------------------------------
# output helpers


def _is_image(problem: InverseProblem) -> bool:
    return problem.image_shape is not None


def _write_signal(problem: InverseProblem, x, stem: Path) -> None:
    write_vector_csv(stem.with_suffix(".csv"), x)
    if _is_image(problem):
        n_y, n_x = problem.image_shape
        write_pgm(stem.with_suffix(".pgm"), vector_to_image(x, n_x, n_y), bits=16)


def _summary_row(spec: RunSpec, method: str, result: CRResult) -> list:
    rre = result.log.rre()
    final = rre[-1] if rre.size else None
    outer = int(result.log.outer()[-1]) if result.log.n_iter else 0
    lam = result.lambdas[-1] if result.lambdas else None
    return [
        spec.experiment,
        method,
        spec.seed,
        format_float(final),
        result.log.n_iter,
        iters_to_within(rre),
        outer,
        format_float(lam),
        result.status,
    ]


def _manifest(problem: InverseProblem) -> dict:
    return {
        "experiment": problem.name,
        "seed": problem.seed,
        "noise_level": problem.noise_level,
        "delta": problem.delta,
        "unknowns": problem.A.cols,
        "measurements": problem.A.rows,
        "image_shape": problem.image_shape,
        "data_shape": problem.data_shape,
        "vectorization": "column-major" if _is_image(problem) else None,
        "forward_operator": problem.A.description,
        "forward_nnz": problem.A.nnz,
        "regularization_operator": problem.L.description,
        "prng": "PCG64",
        "meta": problem.meta,
    }


def _solve_into(spec: RunSpec, problem: InverseProblem, method: str, out: Path) -> CRResult:
    config = spec.config(method)
    _, cumulative = parse_method(method)
    result = run_method(problem, config)
    out.mkdir(parents=True, exist_ok=True)
    result.log.to_csv(out / "convergence.csv")
    _write_signal(problem, result.x, out / "reconstruction")
    if cumulative:
        write_vector_csv(out / "weights_final.csv", result.final_weights, name="d")
    write_rows(out / "summary.csv", SUMMARY_HEADER, [_summary_row(spec, method, result)])
    if spec.figures:
        from . import plotting

        plotting.plot_convergence({method: result.log.rre()}, out / "convergence.png", problem.name)
        plotting.plot_reconstructions(
            problem.x_true,
            {method: result.x},
            out / "reconstruction.png",
            problem.image_shape,
            problem.b,
            problem.data_shape,
        )
        if cumulative:
            plotting.plot_weights(result.final_weights, out / "weights.png", problem.image_shape)
    return result


# ---------------------------------------------------------------------------
# commands


def cmd_gen(spec: RunSpec) -> int:
    """Write the phantom, the data, a data image and a ``problem.json`` manifest."""
    problem = make_experiment(spec.experiment, spec.scale, spec.seed)
    out = spec.out
    out.mkdir(parents=True, exist_ok=True)
    _write_signal(problem, problem.x_true, out / "x_true")
    write_vector_csv(out / "data.csv", problem.b)
    if problem.data_shape is not None:
        write_pgm(out / "sinogram.pgm", problem.b.reshape(problem.data_shape), bits=16)
    write_json(out / "problem.json", _manifest(problem))
    if spec.mtx:
        problem.A.write_matrix_market(out / "A.mtx")
        problem.L.write_matrix_market(out / "L.mtx")
    if spec.figures:
        from . import plotting

        plotting.plot_reconstructions(
            problem.x_true, {}, out / "problem.png", problem.image_shape, problem.b, problem.data_shape
        )
    return 0


def cmd_solve(spec: RunSpec) -> int:
    """Run one method; budget exhaustion is reported in ``summary.csv``, not as failure."""
    problem = make_experiment(spec.experiment, spec.scale, spec.seed)
    result = _solve_into(spec, problem, spec.method, spec.out)
    rre = result.log.rre()
    print(
        f"{spec.experiment} {spec.method}: rre={format_float(rre[-1]) if rre.size else 'n/a'} "
        f"iters={result.log.n_iter} status={result.status}"
    )
    return 0


def cmd_experiment(spec: RunSpec) -> int:
    """Run the four table methods on one shared problem and write ``table.csv``."""
    problem = make_experiment(spec.experiment, spec.scale, spec.seed)
    spec.out.mkdir(parents=True, exist_ok=True)
    write_json(spec.out / "problem.json", _manifest(problem))
    rows, curves, solutions = [], {}, {}
    for method in METHODS:
        try:
            result = _solve_into(spec, problem, method, spec.out / method)
        except Exception as exc:  # keep going, record the failure
            print(f"{method}: failed: {exc}", file=sys.stderr)
            rows.append([method, "", "", "", f"error: {exc}"])
            continue
        rre = result.log.rre()
        curves[method] = rre
        solutions[method] = result.x
        rows.append([method, format_float(rre[-1]), result.log.n_iter, iters_to_within(rre), result.status])
        print(f"{spec.experiment} {method}: rre={format_float(rre[-1])} iters={result.log.n_iter}")
    write_rows(spec.out / "table.csv", TABLE_HEADER, rows)
    if spec.figures and curves:
        from . import plotting

        plotting.plot_convergence(curves, spec.out / "convergence.png", problem.name)
        plotting.plot_reconstructions(
            problem.x_true,
            solutions,
            spec.out / "reconstructions.png",
            problem.image_shape,
            problem.b,
            problem.data_shape,
        )
    return 0


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "experiment": cmd_experiment}


# ---------------------------------------------------------------------------
# argument handling


def _cycles(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("cycles must be nonnegative")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crgks",
        description="Cumulative reweighted lq regularization with recycled Krylov subspaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    # every default is None so that the JSON file and presets can fill in
    common.add_argument("--experiment", choices=EXPERIMENTS)
    common.add_argument("--scale", type=int, help="image size of the CT problems")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="output directory (created if missing)")
    common.add_argument("--config", type=Path, help="JSON file of settings")
    common.add_argument("--no-figures", dest="figures", action="store_const", const=False)

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument("--q", type=float)
    solver.add_argument("--s", type=float, help="cumulative exponent")
    solver.add_argument("--kmin", type=int)
    solver.add_argument("--kmax", type=int)
    solver.add_argument("--epsilon", type=float, help="MM smoothing")
    solver.add_argument("--tau", type=float, help="discrepancy safety factor")
    solver.add_argument("--budget", type=int, help="total inner iterations")
    solver.add_argument("--nouter", type=int)
    solver.add_argument("--tol", type=float, help="inner relative-change tolerance")
    solver.add_argument("--rule", choices=("discrepancy", "lcurve"))
    solver.add_argument("--cycles", type=_cycles, help="enlarge-compress cycles per inner solve, 0 for no cap")
    solver.add_argument("--compression", choices=("data", "solution", "sigma"))

    gen = sub.add_parser("gen", parents=[common], help="write a problem instance")
    gen.add_argument("--mtx", action="store_const", const=True, help="also write A and L as Matrix Market")
    solve = sub.add_parser("solve", parents=[common, solver], help="run one method")
    solve.add_argument("--method", help="l2, l1, cr-l2, cr-l1 or lq:<q>")
    sub.add_parser("experiment", parents=[common, solver], help="run all four methods")
    return parser


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def resolve_spec(args: argparse.Namespace) -> RunSpec:
    """Merge flags over the JSON file over defaults."""
    given = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")}
    file_values = _load_config(getattr(args, "config", None))
    unknown = set(file_values) - set(CONFIG_FLAGS) - set(RUN_FLAGS)
    if unknown:
        raise ValueError(f"unknown keys in config file: {', '.join(sorted(unknown))}")
    merged = {**DEFAULTS, **file_values, **given}
    overrides = {name: merged[flag] for flag, name in CONFIG_FLAGS.items() if merged.get(flag) is not None}
    return RunSpec(
        experiment=merged["experiment"],
        method=merged["method"],
        overrides=overrides,
        scale=merged.get("scale"),
        seed=int(merged["seed"]),
        out=Path(merged.get("out", Path("out") / merged["experiment"])),
        figures=bool(merged["figures"]),
        mtx=bool(merged["mtx"]),
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        spec = resolve_spec(args)
        command = COMMANDS[args.command]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SolverWarning)
            return command(spec)
    except (ValueError, OSError) as exc:
        print(f"crgks {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
