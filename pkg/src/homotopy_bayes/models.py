"""Forward-model interface, linear test models and the Gaussian-noise misfit."""

from __future__ import annotations

from typing import Callable, Protocol

import numpy as np

from .errors import ContractError, EstimationError


class ForwardModel(Protocol):
    """Maps an unknown vector to a predicted data vector."""

    def __call__(self, kappa: np.ndarray) -> np.ndarray: ...


class LinearModel:
    def __init__(self, A):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))

    @property
    def input_dim(self) -> int:
        return self.A.shape[1]

    def __call__(self, kappa) -> np.ndarray:
        return self.A @ np.asarray(kappa, dtype=float)

    def batch(self, K) -> np.ndarray:
        return np.asarray(K, dtype=float) @ self.A.T


class ZeroLikelihood:
    """Phi == 0: the flow should leave the prior untouched."""

    def __call__(self, kappa) -> float:
        return 0.0

    def batch(self, K) -> np.ndarray:
        return np.zeros(len(K))


class NullModel:
    """Predicts an empty data vector, so with empty data the misfit is 0."""

    def __call__(self, kappa) -> np.ndarray:
        return np.zeros(0)

    def batch(self, K) -> np.ndarray:
        return np.zeros((len(K), 0))


def neg_log_likelihood(model: ForwardModel, data, noise_sd: float, kappa) -> float:
    data = np.asarray(data, dtype=float)
    try:
        pred = np.asarray(model(np.asarray(kappa, dtype=float)), dtype=float)
    except Exception as exc:
        raise EstimationError(f"forward model failed at kappa={np.asarray(kappa).tolist()}: {exc}") from exc
    if pred.shape != data.shape:
        raise ContractError(f"model output shape {pred.shape} != data shape {data.shape}")
    r = data - pred
    return float(r @ r) / (2.0 * noise_sd**2)


class NegLogLikelihood:
    """Callable Phi(kappa) = |data - model(kappa)|^2 / (2 noise_sd^2)."""

    def __init__(self, model: ForwardModel, data, noise_sd: float):
        if noise_sd <= 0:
            raise ContractError("noise_sd must be positive")
        self.model = model
        self.data = np.asarray(data, dtype=float)
        self.noise_sd = float(noise_sd)

    def __call__(self, kappa) -> float:
        return neg_log_likelihood(self.model, self.data, self.noise_sd, kappa)

    def batch(self, K) -> np.ndarray:
        K = np.asarray(K, dtype=float)
        if hasattr(self.model, "batch"):
            r = self.data - self.model.batch(K)
            return np.sum(r * r, axis=1) / (2.0 * self.noise_sd**2)
        return np.array([self(k) for k in K])


def evaluate_phi(phi: Callable, X, workers: int = 1) -> np.ndarray:
    """Evaluate ``phi`` on every row of ``X`` in index order.

    Results are gathered by row index, so the output does not depend on
    ``workers``.
    """
    X = np.asarray(X, dtype=float)
    if hasattr(phi, "batch"):
        values = np.asarray(phi.batch(X), dtype=float)
    elif workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            values = np.fromiter(pool.map(phi, X, chunksize=max(1, len(X) // (4 * workers))), float, len(X))
    else:
        values = np.fromiter((phi(x) for x in X), float, len(X))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        i = int(bad[0])
        raise EstimationError(f"Phi is not finite at sample {i}: kappa={X[i].tolist()}, value={values[i]}")
    return values
