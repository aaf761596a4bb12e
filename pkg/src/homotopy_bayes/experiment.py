"""Build a problem from an ExperimentConfig, run the flow and write artifacts.

RNG streams are split from the top-level seed: data noise uses
``SeedSequence([seed, 0])``, the flow ``[seed, 1]``, posterior draws
``[seed, 2]``, mixture initialisation ``[seed, 3]`` and RW-MH ``[seed, 4]``.
Changing flow settings therefore never changes the synthetic data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, ContractError
from .flow import EstimatorConfig, FlowState, run_homotopy, trajectory_rows
from .gaussian import GaussianParams, MomentParams, moment_to_param, param_to_moment
from .mixture import MixtureParams, from_prior
from .models import LinearModel, NegLogLikelihood
from .reference import (
    LinearGaussianProblem,
    adaptive_grid_posterior,
    linear_gaussian_posterior,
    rwmh,
)

DATA_STREAM, FLOW_STREAM, SAMPLE_STREAM, INIT_STREAM, RWMH_STREAM = range(5)


def stream(seed: int, which: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, which])


def stream_int(seed: int, which: int) -> int:
    return int(stream(seed, which).generate_state(1, np.uint64)[0])


@dataclass
class Problem:
    """Everything the flow needs, in flow coordinates."""

    name: str
    prior: GaussianParams
    model: Callable  # flow coordinates -> data vector
    data: np.ndarray
    noise_sd: float
    coordinates: str
    to_physical: Optional[Callable] = None  # flow coordinates (n, d) -> physical (n, d)
    truth_flow: Optional[np.ndarray] = None
    extra: dict = None

    @property
    def phi(self) -> NegLogLikelihood:
        return NegLogLikelihood(self.model, self.data, self.noise_sd)


def _read_vector_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        return np.array([float(r[-1]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: expected a header and one value per row") from exc


def _truth_vector(cfg: ExperimentConfig, size: int, what: str) -> np.ndarray:
    try:
        t = np.atleast_1d(np.asarray(cfg.truth, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'truth' must be a numeric vector for {cfg.problem}") from exc
    if t.shape != (size,):
        raise ConfigError(f"field 'truth' must have {size} entries ({what}), got {t.size}")
    return t


def build_linear(cfg: ExperimentConfig) -> Problem:
    model = LinearModel(cfg.model.A)
    d = model.input_dim
    mean = np.atleast_1d(np.asarray(cfg.prior.mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cfg.prior.cov, dtype=float))
    if mean.shape != (d,) or cov.shape != (d, d):
        raise ConfigError(f"prior.mean / prior.cov must match model.A's {d} columns")
    try:
        prior = moment_to_param(MomentParams(mean, cov))
    except ValueError as exc:
        raise ConfigError(f"prior.cov is not symmetric positive definite: {exc}") from exc
    truth = None
    if cfg.data_file:
        data = _read_vector_csv(cfg.data_file)
    else:
        truth = _truth_vector(cfg, d, "unknowns")
        noise = np.random.default_rng(stream(cfg.seed, DATA_STREAM)).standard_normal(model.A.shape[0])
        data = model(truth) + cfg.noise_sd * noise
    if data.shape != (model.A.shape[0],):
        raise ConfigError(f"data length {data.size} does not match model.A's {model.A.shape[0]} rows")
    return Problem("linear_test", prior, model, data, cfg.noise_sd, "kappa", None, truth, {})


def build_heat(cfg: ExperimentConfig) -> Problem:
    from .heat import HeatForwardModel, StandardizedHeatModel, load_geometry, lognormal_hyperparams

    geometry, sensors = load_geometry(cfg.problem)
    base = HeatForwardModel(geometry, sensors, cfg.model.resolution)
    lam0, zeta0 = lognormal_hyperparams(cfg.prior.kappa0, cfg.prior.sigma0)
    model = StandardizedHeatModel(base, lam0, zeta0)
    K = geometry.n_inclusions
    truth_xi = None
    if cfg.data_file:
        data = _read_vector_csv(cfg.data_file)
    else:
        truth = _truth_vector(cfg, K, "conductivities")
        if np.any(truth <= 0):
            raise ConfigError("heat conductivities in 'truth' must be positive")
        truth_xi = (np.log(truth) - lam0) / zeta0
        noise = np.random.default_rng(stream(cfg.seed, DATA_STREAM)).standard_normal(len(sensors))
        data = base(truth) + cfg.noise_sd * noise
    if data.shape != (len(sensors),):
        raise ConfigError(f"data length {data.size} does not match the {len(sensors)} sensors")

    def to_physical(xi):
        return np.exp(lam0 + zeta0 * np.asarray(xi, dtype=float))

    extra = {"lambda0": lam0, "zeta0": zeta0, "sensors": np.asarray(sensors, dtype=float)}
    return Problem(cfg.problem, GaussianParams.standard(K), model, data, cfg.noise_sd, "xi", to_physical, truth_xi, extra)


def scatter_config(cfg: ExperimentConfig):
    from .scatter import ScatterConfig

    m = cfg.model
    try:
        return ScatterConfig(m.k, m.tau, m.incident_angles, m.n_observations, m.n)
    except ContractError as exc:
        raise ConfigError(f"[model] is invalid for scatter: {exc}") from exc


def build_scatter(cfg: ExperimentConfig) -> Problem:
    from .scatter import (
        ScatterForwardModel,
        add_far_field_noise,
        far_field_data,
        fourier_curve,
        read_far_field_csv,
        shape_catalog,
        stack_real,
    )

    sc = scatter_config(cfg)
    model = ScatterForwardModel(sc, cfg.prior.decay, cfg.prior.n_modes)
    truth_flow = None
    if cfg.data_file:
        Y, obs, inc = read_far_field_csv(cfg.data_file)
        if Y.shape != (sc.n_observations, len(sc.incident_angles)):
            raise ConfigError(f"{cfg.data_file}: far field has shape {Y.shape}, config expects "
                              f"({sc.n_observations}, {len(sc.incident_angles)})")
    else:
        if isinstance(cfg.truth, str):
            try:
                curve = shape_catalog(cfg.truth)
            except ContractError as exc:
                raise ConfigError(f"field 'truth': {exc}") from exc
        else:
            truth_flow = _truth_vector(cfg, model.input_dim, "Fourier coefficients")
            curve = fourier_curve(truth_flow, cfg.prior.decay)
        Y = add_far_field_noise(far_field_data(curve, sc), cfg.noise_sd, stream(cfg.seed, DATA_STREAM))
    # the likelihood uses the relative level against the observed data's norm
    noise_sd = cfg.noise_sd * float(np.linalg.norm(Y))
    extra = {"far_field": Y, "scatter_config": sc}
    return Problem("scatter", GaussianParams.standard(model.input_dim), model, stack_real(Y), noise_sd,
                   "fourier", None, truth_flow, extra)


def build_problem(cfg: ExperimentConfig) -> Problem:
    builders = {"linear_test": build_linear, "heat2": build_heat, "heat6": build_heat, "scatter": build_scatter}
    return builders[cfg.problem](cfg)


def initial_params(cfg: ExperimentConfig, prior: GaussianParams):
    if cfg.family.kind == "gaussian":
        return prior
    if cfg.family.components < 2:
        raise ConfigError("family.components must be >= 2 for a mixture")
    return from_prior(prior, cfg.family.components, cfg.family.mean_jitter, stream(cfg.seed, INIT_STREAM))


def flow_config(cfg: ExperimentConfig) -> EstimatorConfig:
    seed = int(np.random.SeedSequence([cfg.seed, FLOW_STREAM, cfg.flow.seed]).generate_state(1, np.uint64)[0])
    return replace(cfg.flow, seed=seed)


def family_moments(params) -> MomentParams:
    if isinstance(params, GaussianParams):
        return param_to_moment(params)
    w = params.weights()
    moments = [param_to_moment(c) for c in params.components]
    mean = sum(wi * m.mean for wi, m in zip(w, moments))
    second = sum(wi * (m.covariance + np.outer(m.mean, m.mean)) for wi, m in zip(w, moments))
    return MomentParams(mean, second - np.outer(mean, mean))


def params_to_json(params) -> dict:
    family = "gaussian" if isinstance(params, GaussianParams) else "mixture"
    return {"family": family, "record": [float(v) for v in params.to_record()]}


def params_from_json(obj: dict):
    try:
        family, record = obj["family"], obj["record"]
    except (KeyError, TypeError) as exc:
        raise ConfigError("params record needs 'family' and 'record' fields") from exc
    cls = {"gaussian": GaussianParams, "mixture": MixtureParams}.get(family)
    if cls is None:
        raise ConfigError(f"unknown family {family!r} in params record")
    try:
        return cls.from_record(np.asarray(record, dtype=float))
    except ValueError as exc:
        raise ConfigError(f"malformed params record: {exc}") from exc


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _moments_json(m: MomentParams) -> dict:
    return {"mean": m.mean.tolist(), "covariance": m.covariance.tolist()}


def sample_rows(problem: Problem, params, n: int, seed):
    X = params.sample(n, seed)
    d = X.shape[1]
    header = [f"{problem.coordinates}{i + 1}" for i in range(d)]
    if problem.to_physical is not None:
        header += [f"kappa{i + 1}" for i in range(d)]
        X = np.hstack([X, problem.to_physical(X)])
    return header, X


def oracle_comparison(cfg: ExperimentConfig, problem: Problem, params=None) -> dict:
    """Reference posterior moments, plus gaps to ``params`` when given."""
    out = {"problem": problem.name, "coordinates": problem.coordinates}
    refs = {}
    d = problem.prior.dim
    if problem.name == "linear_test":
        cov = np.linalg.inv(problem.prior.precision)
        lgp = LinearGaussianProblem(problem.model.A, problem.prior.mean, cov, problem.noise_sd, problem.data)
        refs["closed_form"] = linear_gaussian_posterior(lgp)
    grid = None
    if d <= 2:
        grid = adaptive_grid_posterior(problem.phi, problem.prior, cfg.outputs.grid_n)
        refs["grid"] = MomentParams(grid.mean, grid.covariance)
    if cfg.outputs.rwmh_steps > 0:
        chain, acc = rwmh(problem.phi, problem.prior, cfg.outputs.rwmh_steps, cfg.outputs.rwmh_step_sd,
                          stream(cfg.seed, RWMH_STREAM))
        burn = chain[chain.shape[0] // 5:]
        refs["rwmh"] = MomentParams(burn.mean(axis=0), np.atleast_2d(np.cov(burn.T)))
        out["rwmh_acceptance"] = acc
    out["references"] = {k: _moments_json(v) for k, v in refs.items()}
    if params is not None:
        flow = family_moments(params)
        out["flow"] = _moments_json(flow)
        gaps = {}
        for k, ref in refs.items():
            scale = np.sqrt(np.diag(ref.covariance))
            gaps[k] = {
                "mean_abs": np.abs(flow.mean - ref.mean).tolist(),
                "mean_rel": (np.abs(flow.mean - ref.mean) / np.maximum(np.abs(ref.mean), 1e-300)).tolist(),
                "mean_in_sd": (np.abs(flow.mean - ref.mean) / scale).tolist(),
                "variance_rel": (np.abs(np.diag(flow.covariance) - scale**2) / scale**2).tolist(),
            }
        out["gaps"] = gaps
        if grid is not None:
            out["grid_credible_mass_of_flow_mean"] = grid.credible_mass(flow.mean)
    if problem.truth_flow is not None:
        out["truth"] = problem.truth_flow.tolist()
    return out, grid


def density_grid_rows(grid, params):
    axes = grid.axes
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    approx = np.exp(params.logpdf_batch(pts))
    header = [f"x{i + 1}" for i in range(len(axes))] + ["approx_density", "posterior_density"]
    return header, np.column_stack([pts, approx, grid.density.ravel()])


def run_experiment(cfg: ExperimentConfig, out_dir=None, log=print) -> dict:
    """Run the full pipeline and write artifacts; returns a summary dict.

    Exceptions propagate with a ``stage`` attribute naming the failing stage.
    """
    out = Path(out_dir if out_dir is not None else cfg.outputs.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "failure.json").unlink(missing_ok=True)

    with _stage("setup"):
        problem = build_problem(cfg)
        eta0 = initial_params(cfg, problem.prior)
        fcfg = flow_config(cfg)
    log(f"{problem.name}: d={problem.prior.dim}, {problem.data.size} data, noise sd {problem.noise_sd:.6g}")

    visited = [FlowState(0.0, eta0)]

    def progress(state):
        visited.append(state)
        if state.step % 10 == 0 or state.t == 1.0:
            log(f"  t={state.t:.3f} drift_norm={state.diagnostics.drift_norm:.4g} "
                f"halvings={state.diagnostics.n_step_halvings}")

    try:
        with _stage("flow"):
            traj = run_homotopy(eta0, problem.phi, fcfg, problem.prior, progress)
    except Exception as exc:
        # keep what was computed so a failed run can be inspected
        header, rows = trajectory_rows(visited)
        write_csv(out / "trajectory.csv", header, rows)
        write_json(out / "failure.json", {
            "stage": getattr(exc, "stage", "flow"), "error": type(exc).__name__,
            "message": str(exc), "last_t": visited[-1].t,
        })
        raise
    final = traj.final

    with _stage("output"):
        header, rows = trajectory_rows(traj)
        write_csv(out / "trajectory.csv", header, rows)
        record = params_to_json(final)
        record["coordinates"] = problem.coordinates
        record.update(_moments_json(family_moments(final)))
        write_json(out / "final_params.json", record)
        header, X = sample_rows(problem, final, cfg.outputs.n_samples, stream(cfg.seed, SAMPLE_STREAM))
        write_csv(out / "posterior_samples.csv", header, X)
        if problem.name == "scatter":
            from .scatter import write_far_field_csv

            sc = problem.extra["scatter_config"]
            write_far_field_csv(out / "data.csv", problem.extra["far_field"], sc.observation_angles,
                                sc.incident_angles)
        elif "sensors" in problem.extra:
            S = problem.extra["sensors"]
            write_csv(out / "data.csv", ["x1", "x2", "value"], np.column_stack([S, problem.data]))
        else:
            write_csv(out / "data.csv", ["index", "value"], list(enumerate(problem.data)))

    summary = {"final_mean": family_moments(final).mean.tolist(), "t_final": traj.states[-1].t}
    if problem.prior.dim <= 2 or cfg.outputs.rwmh_steps > 0 or problem.name == "linear_test":
        with _stage("oracle"):
            comparison, grid = oracle_comparison(cfg, problem, final)
            write_json(out / "comparison.json", comparison)
            if grid is not None and cfg.outputs.density_grid:
                header, G = density_grid_rows(grid, final)
                write_csv(out / "density_grid.csv", header, G)
        summary["comparison"] = comparison
    if problem.name == "scatter":
        summary["hausdorff_to_truth"] = _scatter_hausdorff(cfg, problem, final)
        write_json(out / "shape_summary.json", {"hausdorff_to_truth": summary["hausdorff_to_truth"]})
    log(f"done: final mean {np.round(summary['final_mean'], 4).tolist()}")
    return summary


def _scatter_hausdorff(cfg, problem, final):
    from .scatter import fourier_curve, hausdorff_distance, shape_catalog

    if cfg.data_file:
        return None
    truth = shape_catalog(cfg.truth) if isinstance(cfg.truth, str) else fourier_curve(problem.truth_flow, cfg.prior.decay)
    mean = family_moments(final).mean
    return hausdorff_distance(fourier_curve(mean, cfg.prior.decay), truth)


class _stage:
    """Context manager tagging escaping exceptions with the pipeline stage."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not hasattr(exc, "stage"):
            try:
                exc.stage = self.name
            except AttributeError:
                pass
        return False
