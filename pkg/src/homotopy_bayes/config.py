"""Experiment configuration: a nested TOML file mapped onto frozen dataclasses."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, fields, replace
from typing import Optional

from .errors import ConfigError
from .flow import EstimatorConfig

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

PROBLEMS = ("linear_test", "heat2", "heat6", "scatter")


@dataclass(frozen=True)
class PriorConfig:
    # linear_test: Gaussian prior on kappa
    mean: Optional[tuple] = None
    cov: Optional[tuple] = None
    # heat: lognormal marginals with this mean and sd
    kappa0: float = 30.0
    sigma0: float = 6.0
    # scatter: decay exponent and number of Fourier modes of the log-radius
    decay: float = 2.2
    n_modes: int = 5


@dataclass(frozen=True)
class ModelConfig:
    A: Optional[tuple] = None  # linear_test forward matrix
    resolution: int = 32  # heat mesh resolution
    k: float = 1.0
    tau: Optional[float] = None
    incident_angles: tuple = (0.0, math.pi / 2)
    n_observations: int = 64
    n: int = 128  # Nystrom quadrature size


@dataclass(frozen=True)
class FamilyConfig:
    kind: str = "gaussian"
    components: int = 2
    mean_jitter: float = 0.5


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    n_samples: int = 1000
    density_grid: bool = True
    grid_n: int = 121
    rwmh_steps: int = 0  # 0 disables the random-walk Metropolis oracle
    rwmh_step_sd: float = 0.3


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    noise_sd: float
    truth: object = None  # vector, or a catalog shape name for scatter
    data_file: Optional[str] = None
    seed: int = 0
    prior: PriorConfig = field(default_factory=PriorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    family: FamilyConfig = field(default_factory=FamilyConfig)
    flow: EstimatorConfig = field(default_factory=EstimatorConfig)
    outputs: OutputConfig = field(default_factory=OutputConfig)


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def _section(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"[{name}] has unknown field(s): {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: _tuplify(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] is invalid: {exc}") from exc


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    raw = dict(raw)
    for required in ("problem", "noise_sd"):
        if required not in raw:
            raise ConfigError(f"missing required field '{required}'")
    problem = raw.pop("problem")
    if problem not in PROBLEMS:
        raise ConfigError(f"field 'problem' must be one of {PROBLEMS}, got {problem!r}")
    noise_sd = raw.pop("noise_sd")
    if not isinstance(noise_sd, (int, float)) or not noise_sd > 0:
        raise ConfigError(f"field 'noise_sd' must be a positive number, got {noise_sd!r}")
    sections = {
        "prior": PriorConfig, "model": ModelConfig, "family": FamilyConfig,
        "flow": EstimatorConfig, "outputs": OutputConfig,
    }
    parsed = {name: _section(cls, raw.pop(name, None), name) for name, cls in sections.items()}
    truth = _tuplify(raw.pop("truth", None))
    data_file = raw.pop("data_file", None)
    seed = raw.pop("seed", 0)
    if raw:
        raise ConfigError(f"unknown top-level field(s): {', '.join(sorted(raw))}")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"field 'seed' must be a nonnegative integer, got {seed!r}")
    if truth is None and data_file is None:
        raise ConfigError("one of 'truth' or 'data_file' is required")
    if data_file is not None:
        from pathlib import Path

        p = Path(data_file)
        data_file = str(p if p.is_absolute() else Path(base_dir) / p)
    if parsed["family"].kind not in ("gaussian", "mixture"):
        raise ConfigError(f"field 'family.kind' must be 'gaussian' or 'mixture', got {parsed['family'].kind!r}")
    if problem == "linear_test":
        for name in ("mean", "cov"):
            if getattr(parsed["prior"], name) is None:
                raise ConfigError(f"linear_test requires field 'prior.{name}'")
        if parsed["model"].A is None:
            raise ConfigError("linear_test requires field 'model.A'")
    return ExperimentConfig(problem, float(noise_sd), truth, data_file, seed, **parsed)


def load_config(path, seed: Optional[int] = None) -> ExperimentConfig:
    from pathlib import Path

    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = parse_config(raw, str(path.parent))
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg
