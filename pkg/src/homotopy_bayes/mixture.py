"""Gaussian mixture with arctan-parameterised weights.

Weights are ``w_i = a_i / sum(a)`` with ``a_i = pi/2 + arctan(lambda_i)`` and
``lambda_M`` pinned to zero, so the ``M - 1`` stored lambdas are unconstrained.
The flow vector is ``[component_1, ..., component_M, lambda_1..lambda_{M-1}]``
where each component contributes its own ``[mean, chol_vech]`` block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError, InvalidParamsError
from .gaussian import GaussianParams, vech_size


@dataclass(frozen=True, eq=False)
class MixtureParams:
    components: tuple
    lambdas: np.ndarray

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ContractError("a mixture needs at least one component")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ContractError("all mixture components must share one dimension")
        lam = np.atleast_1d(np.array(self.lambdas, dtype=float)) if len(comps) > 1 else np.zeros(0)
        if lam.shape != (len(comps) - 1,):
            raise ContractError(f"expected {len(comps) - 1} lambdas, got {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise InvalidParamsError("non-finite mixture weight parameters")
        lam.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "lambdas", lam)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def size(self) -> int:
        d = self.dim
        return self.n_components * (d + vech_size(d)) + self.n_components - 1

    def _weight_terms(self):
        lam_full = np.append(self.lambdas, 0.0)
        a = np.pi / 2 + np.arctan(lam_full)
        return lam_full, a, a.sum()

    def weights(self) -> np.ndarray:
        _, a, total = self._weight_terms()
        return a / total

    # -- flat parameter vector ------------------------------------------------
    def to_vector(self) -> np.ndarray:
        return np.concatenate([c.to_vector() for c in self.components] + [self.lambdas])

    def with_vector(self, v) -> "MixtureParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ContractError(f"expected vector of length {self.size}, got {v.shape}")
        block = self.components[0].size
        comps = [
            self.components[i].with_vector(v[i * block : (i + 1) * block])
            for i in range(self.n_components)
        ]
        return MixtureParams(tuple(comps), v[self.n_components * block :])

    # -- record: [M, d, lambdas..., component records...] ----------------------
    def to_record(self) -> np.ndarray:
        parts = [[self.n_components, self.dim], self.lambdas]
        parts += [c.to_record() for c in self.components]
        return np.concatenate(parts)

    @classmethod
    def from_record(cls, rec) -> "MixtureParams":
        rec = np.asarray(rec, dtype=float)
        M, d = int(rec[0]), int(rec[1])
        lam = rec[2 : 2 + M - 1]
        comp_len = 1 + d + vech_size(d)
        start = 2 + M - 1
        if rec.size != start + M * comp_len:
            raise ContractError("mixture record has the wrong length")
        comps = [
            GaussianParams.from_record(rec[start + i * comp_len : start + (i + 1) * comp_len])
            for i in range(M)
        ]
        return cls(tuple(comps), lam)

    # -- densities --------------------------------------------------------------
    def _component_logs(self, X) -> np.ndarray:
        return np.column_stack([c.logpdf_batch(X) for c in self.components])

    def logpdf_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return logsumexp(self._component_logs(X) + np.log(self.weights()), axis=1)

    def responsibilities(self, X) -> np.ndarray:
        logs = self._component_logs(np.asarray(X, dtype=float)) + np.log(self.weights())
        return np.exp(logs - logsumexp(logs, axis=1, keepdims=True))

    def score_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        lam_full, a, total = self._weight_terms()
        w = a / total
        log_q = self._component_logs(X)
        log_g = logsumexp(log_q + np.log(w), axis=1, keepdims=True)
        resp = np.exp(log_q + np.log(w) - log_g)
        blocks = [resp[:, [i]] * c.score_batch(X) for i, c in enumerate(self.components)]
        M = self.n_components
        if M > 1:
            ratio = np.exp(log_q[:, : M - 1] - log_g)  # q_i / g
            blocks.append((ratio - 1.0) / ((1.0 + lam_full[: M - 1] ** 2) * total))
        return np.hstack(blocks)

    def sample(self, count: int, seed) -> np.ndarray:
        if count < 1:
            raise ContractError("count must be >= 1")
        rng = np.random.default_rng(seed)
        labels = rng.choice(self.n_components, size=count, p=self.weights())
        z = rng.standard_normal((count, self.dim))
        out = np.empty_like(z)
        for i, c in enumerate(self.components):
            idx = labels == i
            out[idx] = c.mean + np.linalg.solve(c.R, z[idx].T).T
        return out


def from_prior(prior: GaussianParams, n_components: int, mean_jitter: float, seed) -> MixtureParams:
    """Equal-weight mixture whose components copy ``prior`` with jittered means.

    The jitter is measured in prior standard deviations.
    """
    rng = np.random.default_rng(seed)
    L = np.linalg.inv(prior.R)  # covariance factor
    comps = []
    for _ in range(n_components):
        shift = L @ rng.standard_normal(prior.dim) * mean_jitter
        comps.append(GaussianParams(prior.mean + shift, prior.chol_vech))
    return MixtureParams(tuple(comps), np.zeros(n_components - 1))


def _as_point(mix: MixtureParams, point) -> np.ndarray:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.shape != (mix.dim,):
        raise ContractError(f"point must have length {mix.dim}, got shape {point.shape}")
    return point[None, :]


def weights(mix: MixtureParams) -> np.ndarray:
    return mix.weights()


def mix_logpdf(mix: MixtureParams, point) -> float:
    return float(mix.logpdf_batch(_as_point(mix, point))[0])


def mix_score(mix: MixtureParams, point) -> np.ndarray:
    return mix.score_batch(_as_point(mix, point))[0]


def mix_sample(mix: MixtureParams, count: int, seed) -> np.ndarray:
    return mix.sample(count, seed)
