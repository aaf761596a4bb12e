"""Homotopy flow for the approximating density parameters.

Along ``p(x, t) = exp(-t Phi(x)) q(x)`` the parameters follow

    eta' = -I(eta)^{-1} E_g[Phi(x) d log g(x; eta) / d eta]

where ``I`` is the Fisher information of the approximating family ``g``. Both
expectations are Monte Carlo estimates over one shared sample block per step
and the ODE is integrated with explicit Euler on a uniform grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import ContractError, EstimationError, FlowStallError, InvalidParamsError, SolveError
from .models import NegLogLikelihood, evaluate_phi

DEVIATIONS = ("kl", "hellinger")


@dataclass(frozen=True)
class EstimatorConfig:
    n_samples: int = 2000
    ridge: Optional[float] = None  # None: 1e-8 * trace(I) / p
    use_baseline: bool = True
    seed: int = 0
    max_halvings: int = 20
    dt: float = 0.01
    deviation: str = "kl"
    monitor: bool = False  # KL / Hellinger diagnostics from the step's sample block
    workers: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ContractError("n_samples must be >= 1")
        if self.ridge is not None and self.ridge < 0:
            raise ContractError("ridge must be >= 0")
        if not (0 < self.dt <= 1):
            raise ContractError("dt must lie in (0, 1]")
        if self.max_halvings < 0:
            raise ContractError("max_halvings must be >= 0")
        if self.deviation not in DEVIATIONS:
            raise ContractError(f"deviation must be one of {DEVIATIONS}")


@dataclass(frozen=True)
class StepDiagnostics:
    drift_norm: float = 0.0
    fisher_condition_estimate: float = 1.0
    n_samples_used: int = 0
    n_step_halvings: int = 0
    # evaluated at the start of the step, on that step's sample block
    kl_estimate: Optional[float] = None
    hellinger_estimate: Optional[float] = None


@dataclass(frozen=True)
class FlowState:
    t: float
    params: object
    step: int = 0
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)

    def __post_init__(self):
        if not (0.0 <= self.t <= 1.0 + 1e-12):
            raise ContractError(f"t={self.t} outside [0, 1]")


@dataclass
class FlowTrajectory:
    states: list

    def __post_init__(self):
        ts = [s.t for s in self.states]
        if not ts or ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
            raise ContractError("trajectory must run strictly increasing from t=0 to t=1")

    @property
    def final(self):
        return self.states[-1].params

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)


@dataclass(frozen=True)
class SampleBlock:
    X: np.ndarray
    scores: np.ndarray
    phi: np.ndarray


def step_seed(seed: int, step: int, sub: int = 0) -> np.random.SeedSequence:
    """Seed for sub-step ``sub`` of step ``step``; SeedSequence does the mixing."""
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, step, sub])


def draw_block(params, phi: Optional[Callable], cfg: EstimatorConfig, seed=None) -> SampleBlock:
    seed = cfg.seed if seed is None else seed
    X = params.sample(cfg.n_samples, seed)
    values = evaluate_phi(phi, X, cfg.workers) if phi is not None else np.zeros(0)
    return SampleBlock(X, params.score_batch(X), values)


def _ridge(F: np.ndarray, cfg: EstimatorConfig) -> float:
    if cfg.ridge is None:
        return 1e-8 * np.trace(F) / F.shape[0]
    return cfg.ridge


def estimate_fisher(params, cfg: EstimatorConfig, block: SampleBlock = None, seed=None) -> np.ndarray:
    if block is None:
        block = draw_block(params, None, cfg, seed)
    S = block.scores
    F = S.T @ S / S.shape[0]
    F = 0.5 * (F + F.T)
    return F + _ridge(F, cfg) * np.eye(F.shape[0])


def estimate_drift(params, phi: Callable, cfg: EstimatorConfig, block: SampleBlock = None, seed=None) -> np.ndarray:
    """Monte Carlo estimate of E_g[Phi * score] (optionally baseline-centred)."""
    if block is None:
        block = draw_block(params, phi, cfg, seed)
    values = block.phi
    if cfg.use_baseline:
        values = values - values.mean()
    return block.scores.T @ values / values.size


def _log_weights(params, prior, block: SampleBlock, t: float) -> np.ndarray:
    """log p(x, t) - log g(x) on the block."""
    return prior.logpdf_batch(block.X) - t * block.phi - params.logpdf_batch(block.X)


def _kl_from_block(lw: np.ndarray, self_normalized: bool) -> float:
    kl = -lw.mean()
    if self_normalized:
        kl += logsumexp(lw) - math.log(lw.size)
    return float(kl)


def _hellinger_from_block(lw: np.ndarray) -> float:
    log_bc = logsumexp(0.5 * lw) - math.log(lw.size) - 0.5 * (logsumexp(lw) - math.log(lw.size))
    return float(1.0 - math.exp(log_bc))


def kl_estimate(params, phi, t: float, cfg: EstimatorConfig, prior, self_normalized=False, seed=None) -> float:
    """Monte Carlo KL(g || p(., t)/Z_t) diagnostic.

    The plain estimate E_g[log g + t Phi - log q] is offset by the unknown
    ``log Z_t``. With ``self_normalized`` the importance-sampling estimate of
    ``log Z_t`` is added back; that variant is nonnegative by Jensen.
    """
    block = draw_block(params, phi, cfg, seed)
    return _kl_from_block(_log_weights(params, prior, block, t), self_normalized)


def hellinger_estimate(params, phi, t: float, cfg: EstimatorConfig, prior, seed=None) -> float:
    """Self-normalised squared Hellinger distance between g and p(., t)/Z_t."""
    block = draw_block(params, phi, cfg, seed)
    return _hellinger_from_block(_log_weights(params, prior, block, t))


def natural_direction(params, block: SampleBlock, cfg: EstimatorConfig):
    """Solve I d = v on a sample block; returns (d, fisher, drift)."""
    F = estimate_fisher(params, cfg, block)
    v = estimate_drift(params, None, cfg, block)
    if cfg.deviation == "hellinger":
        # both sides carry the same 1/4 factor; powers of two scale exactly
        F, v = 0.25 * F, 0.25 * v
    try:
        factor = cho_factor(F, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        hint = " (set ridge > 0)" if cfg.ridge == 0 else ""
        raise SolveError(f"Fisher matrix is not positive definite{hint}") from exc
    return cho_solve(factor, v), F, v


def hde_step(state: FlowState, phi: Callable, cfg: EstimatorConfig, prior=None, dt: float = None) -> FlowState:
    """One Euler step ``eta <- eta - dt I^{-1} v`` with step halving.

    If the proposal leaves the parameter domain the sub-step is halved (up to
    ``cfg.max_halvings`` times in total) and sub-steps are taken until the
    full ``dt`` has been consumed.
    """
    dt = cfg.dt if dt is None else dt
    if dt < 0 or state.t + dt > 1.0 + 1e-12:
        raise ContractError(f"step of {dt} from t={state.t} leaves [0, 1]")
    if dt == 0:
        return state

    params = state.params
    level, done, sub, halvings, used = 0, 0, 0, 0, 0
    drift_norm, cond, kl, hel = 0.0, 1.0, None, None
    while done < 2**level:
        block = draw_block(params, phi, cfg, step_seed(cfg.seed, state.step, sub))
        used += block.X.shape[0]
        direction, F, v = natural_direction(params, block, cfg)
        if sub == 0:
            drift_norm = float(np.linalg.norm(v))
            cond = float(np.linalg.cond(F))
            if cfg.monitor and prior is not None:
                lw = _log_weights(params, prior, block, state.t)
                kl, hel = _kl_from_block(lw, False), _hellinger_from_block(lw)
        base = params.to_vector()
        while True:
            h = dt / 2**level
            try:
                params = params.with_vector(base - h * direction)
                break
            except InvalidParamsError:
                halvings += 1
                if halvings > cfg.max_halvings:
                    raise FlowStallError(
                        f"step halving exhausted at t={state.t}", replace(state, params=params)
                    ) from None
                level += 1
                done *= 2
        done += 1
        sub += 1

    diag = StepDiagnostics(drift_norm, cond, used, halvings, kl, hel)
    return FlowState(min(state.t + dt, 1.0), params, state.step + 1, diag)


def time_grid(dt: float) -> np.ndarray:
    n = int(round(1.0 / dt))
    if abs(n * dt - 1.0) > 1e-9:
        n = math.ceil(1.0 / dt)
    t = np.minimum(np.arange(n + 1) * dt, 1.0)
    t[-1] = 1.0
    return t


def run_homotopy(eta0, phi: Callable, cfg: EstimatorConfig, prior=None, callback=None) -> FlowTrajectory:
    """Integrate the flow from ``eta0`` (the prior's parameters) to t = 1."""
    grid = time_grid(cfg.dt)
    state = FlowState(0.0, eta0, 0)
    states = [state]
    for i in range(len(grid) - 1):
        try:
            state = hde_step(state, phi, cfg, prior, dt=grid[i + 1] - grid[i])
        except FlowStallError:
            raise
        except (EstimationError, SolveError) as exc:
            raise type(exc)(f"at t={grid[i]:.6g}: {exc}") from exc
        state = replace(state, t=float(grid[i + 1]))
        states.append(state)
        if callback is not None:
            callback(state)
    return FlowTrajectory(states)


def run_flow(eta0, model, data, noise_sd: float, cfg: EstimatorConfig, prior=None, callback=None) -> FlowTrajectory:
    phi = NegLogLikelihood(model, data, noise_sd)
    if prior is None and hasattr(eta0, "R"):
        prior = eta0
    return run_homotopy(eta0, phi, cfg, prior, callback)


def trajectory_rows(traj):
    """Header and rows for the trajectory CSV (a trajectory or a list of states)."""
    traj = list(traj)
    p = traj[0].params.to_vector().size
    header = ["t"] + [f"eta{i}" for i in range(p)] + [
        "drift_norm", "n_step_halvings", "fisher_condition", "n_samples_used", "kl", "hellinger",
    ]
    rows = []
    for s in traj:
        d = s.diagnostics
        rows.append(
            [s.t, *s.params.to_vector(), d.drift_norm, d.n_step_halvings, d.fisher_condition_estimate,
             d.n_samples_used, d.kl_estimate, d.hellinger_estimate]
        )
    return header, rows
