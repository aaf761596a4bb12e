"""Command line entry point: ``homotopy-bayes {run,sample,oracle,forward}``.

Exit codes: 0 success, 2 configuration error, 3 flow stall, 4 solver or
estimation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .errors import (
    AssemblyError,
    ConfigError,
    ContractError,
    DegenerateCurveError,
    EstimationError,
    FlowStallError,
    LocationError,
    RefinementError,
    SolveError,
)

EXIT_OK, EXIT_CONFIG, EXIT_STALL, EXIT_SOLVER = 0, 2, 3, 4


def _common(suppress: bool) -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the subcommand copy
    # must not overwrite a value given earlier
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(None), help="override the config seed")
    p.add_argument("--out-dir", default=default(None), help="output directory (default: outputs.directory)")
    p.add_argument("--quiet", action="store_true", default=default(False), help="suppress progress output")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="homotopy-bayes", description=__doc__.splitlines()[0],
                                     parents=[_common(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="synthesize data, run the flow, write artifacts")
    p.add_argument("config")
    p = sub.add_parser("sample", parents=[common], help="draw samples from a saved parameter record")
    p.add_argument("params_record", help="final_params.json written by 'run'")
    p.add_argument("n", type=int)
    p = sub.add_parser("oracle", parents=[common], help="reference posterior moments only")
    p.add_argument("config")
    p = sub.add_parser("forward", parents=[common], help="evaluate the forward model")
    p.add_argument("config")
    p.add_argument("kappa", nargs="+", type=float,
                   help="conductivities (heat), unknowns (linear_test) or Fourier coefficients (scatter)")
    return parser


def _cmd_run(args, log) -> int:
    from .config import load_config
    from .experiment import run_experiment

    cfg = load_config(args.config, args.seed)
    run_experiment(cfg, args.out_dir, log)
    return EXIT_OK


def _cmd_sample(args, log) -> int:
    from .experiment import params_from_json, stream, write_csv

    if args.n < 1:
        raise ConfigError("sample count n must be >= 1")
    try:
        obj = json.loads(Path(args.params_record).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read params record {args.params_record}: {exc}") from exc
    params = params_from_json(obj)
    X = params.sample(args.n, stream(args.seed or 0, 2))
    prefix = obj.get("coordinates", "x")
    header = [f"{prefix}{i + 1}" for i in range(X.shape[1])]
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "samples.csv", header, X)
        log(f"wrote {args.n} samples to {out / 'samples.csv'}")
    else:
        import csv

        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(float(v)) for v in row] for row in X])
    return EXIT_OK


def _cmd_oracle(args, log) -> int:
    from .config import load_config
    from .experiment import build_problem, oracle_comparison, write_json

    cfg = load_config(args.config, args.seed)
    problem = build_problem(cfg)
    if problem.prior.dim > 2 and cfg.outputs.rwmh_steps == 0 and problem.name != "linear_test":
        raise ConfigError("d > 2 has no grid oracle; set outputs.rwmh_steps > 0")
    result, _ = oracle_comparison(cfg, problem)
    out = Path(args.out_dir or cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "oracle.json", result)
    for name, ref in result["references"].items():
        log(f"{name}: mean {np.round(ref['mean'], 6).tolist()}")
    return EXIT_OK


def _cmd_forward(args, log) -> int:
    from .config import load_config

    cfg = load_config(args.config, args.seed)
    kappa = np.asarray(args.kappa, dtype=float)
    if cfg.problem == "linear_test":
        from .models import LinearModel

        model = LinearModel(cfg.model.A)
    elif cfg.problem in ("heat2", "heat6"):
        from .heat import HeatForwardModel, load_geometry

        geometry, sensors = load_geometry(cfg.problem)
        model = HeatForwardModel(geometry, sensors, cfg.model.resolution)
    else:
        from .experiment import scatter_config
        from .scatter import ScatterForwardModel

        model = ScatterForwardModel(scatter_config(cfg), cfg.prior.decay, cfg.prior.n_modes)
    y = np.asarray(model(kappa), dtype=float)
    for v in y:
        print(repr(float(v)))
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sample": _cmd_sample, "oracle": _cmd_oracle, "forward": _cmd_forward}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    def log(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    def fail(code, exc):
        stage = getattr(exc, "stage", args.command)
        print(f"error [{stage}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code

    try:
        return COMMANDS[args.command](args, log)
    except (ConfigError, ContractError, RefinementError) as exc:
        return fail(EXIT_CONFIG, exc)
    except FlowStallError as exc:
        return fail(EXIT_STALL, exc)
    except (SolveError, EstimationError, AssemblyError, DegenerateCurveError, LocationError,
            np.linalg.LinAlgError) as exc:
        return fail(EXIT_SOLVER, exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
