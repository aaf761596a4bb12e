"""Multivariate Gaussian in (mean, vech of lower-triangular precision factor) form.

The precision matrix is written ``P = R.T @ R`` with ``R`` lower triangular and
a strictly positive diagonal. Note this is *not* the usual ``L @ L.T``
Cholesky convention: here ``R = inv(chol(cov))``.

``chol_vech`` stores the lower triangle of ``R`` row by row::

    (R11, R21, R22, R31, R32, R33, ...)
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ContractError, InvalidParamsError

LOG_2PI = np.log(2.0 * np.pi)


def vech_size(dim: int) -> int:
    return dim * (dim + 1) // 2


def dim_from_vech_size(size: int) -> int:
    dim = int(round((np.sqrt(8 * size + 1) - 1) / 2))
    if vech_size(dim) != size:
        raise ContractError(f"{size} is not a triangular number")
    return dim


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mean: np.ndarray
    chol_vech: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(_readonly(self.mean))
        vech = np.atleast_1d(_readonly(self.chol_vech))
        if mean.ndim != 1 or vech.ndim != 1:
            raise ContractError("mean and chol_vech must be vectors")
        d = mean.size
        if d < 1 or vech.size != vech_size(d):
            raise ContractError(
                f"chol_vech has length {vech.size}, expected {vech_size(d)} for dim {d}"
            )
        if not (np.isfinite(mean).all() and np.isfinite(vech).all()):
            raise InvalidParamsError("non-finite Gaussian parameters")
        diag = vech[_diag_positions(d)]
        if (diag <= 0.0).any():
            raise InvalidParamsError(f"precision factor diagonal must be > 0, got {diag}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "chol_vech", vech)
        R = np.zeros((d, d))
        R[_tril(d)] = vech
        R.setflags(write=False)
        object.__setattr__(self, "_R", R)

    @classmethod
    def from_factor(cls, mean, R) -> "GaussianParams":
        R = np.atleast_2d(np.asarray(R, dtype=float))
        return cls(mean, R[_tril(R.shape[0])])

    @classmethod
    def standard(cls, dim: int) -> "GaussianParams":
        return cls.from_factor(np.zeros(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def R(self) -> np.ndarray:
        return self._R

    @property
    def precision(self) -> np.ndarray:
        return self._R.T @ self._R

    @property
    def size(self) -> int:
        """Length of the flow parameter vector."""
        return self.dim + vech_size(self.dim)

    # -- flat parameter vector used by the flow -------------------------------
    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.mean, self.chol_vech])

    def with_vector(self, v) -> "GaussianParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ContractError(f"expected vector of length {self.size}, got {v.shape}")
        return GaussianParams(v[: self.dim], v[self.dim :])

    # -- record serialisation: [d, mean..., chol_vech...] --------------------
    def to_record(self) -> np.ndarray:
        return np.concatenate([[self.dim], self.mean, self.chol_vech])

    @classmethod
    def from_record(cls, rec) -> "GaussianParams":
        rec = np.asarray(rec, dtype=float)
        d = int(rec[0])
        if rec.size != 1 + d + vech_size(d):
            raise ContractError("Gaussian record has the wrong length")
        return cls(rec[1 : 1 + d], rec[1 + d :])

    # -- batched density evaluation -------------------------------------------
    def _check_points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ContractError(f"points must have shape (n, {self.dim}), got {X.shape}")
        return X

    def logpdf_batch(self, X) -> np.ndarray:
        X = self._check_points(X)
        Rd = (X - self.mean) @ self._R.T
        logdet = np.sum(np.log(np.diag(self._R)))
        return logdet - 0.5 * self.dim * LOG_2PI - 0.5 * np.sum(Rd * Rd, axis=1)

    def score_batch(self, X) -> np.ndarray:
        """Rows are d log g / d(mean, chol_vech) at each point."""
        X = self._check_points(X)
        diff = X - self.mean
        Rd = diff @ self._R.T
        mean_block = Rd @ self._R
        rows, cols = _tril(self.dim)
        vech_block = -Rd[:, rows] * diff[:, cols]
        on_diag = rows == cols
        vech_block[:, on_diag] += 1.0 / np.diag(self._R)
        return np.hstack([mean_block, vech_block])

    def sample(self, count: int, seed) -> np.ndarray:
        if count < 1:
            raise ContractError("count must be >= 1")
        rng = np.random.default_rng(seed)
        z = rng.standard_normal((count, self.dim))
        return self.mean + solve_triangular(self._R, z.T, lower=True).T

    def __repr__(self) -> str:
        return f"GaussianParams(mean={self.mean.tolist()}, chol_vech={self.chol_vech.tolist()})"


def _frozen_index(a) -> np.ndarray:
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def _diag_positions(d: int) -> np.ndarray:
    # row-major lower triangle: diagonal entry i sits at i(i+1)/2 + i
    i = np.arange(d)
    return _frozen_index(i * (i + 1) // 2 + i)


@lru_cache(maxsize=None)
def _tril(d: int):
    rows, cols = np.tril_indices(d)
    return _frozen_index(rows), _frozen_index(cols)


@dataclass(frozen=True, eq=False)
class MomentParams:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(_readonly(self.mean))
        cov = np.atleast_2d(_readonly(self.covariance))
        if cov.shape != (mean.size, mean.size):
            raise ContractError("covariance shape does not match mean")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def _as_point(params: GaussianParams, point) -> np.ndarray:
    point = np.atleast_1d(np.asarray(point, dtype=float))
    if point.shape != (params.dim,):
        raise ContractError(f"point must have length {params.dim}, got shape {point.shape}")
    return point[None, :]


def logpdf(params: GaussianParams, point) -> float:
    return float(params.logpdf_batch(_as_point(params, point))[0])


def score(params: GaussianParams, point) -> np.ndarray:
    return params.score_batch(_as_point(params, point))[0]


def sample(params: GaussianParams, count: int, seed) -> np.ndarray:
    return params.sample(count, seed)


def moment_to_param(m: MomentParams) -> GaussianParams:
    cov = 0.5 * (m.covariance + m.covariance.T)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise InvalidParamsError("covariance is not symmetric positive definite") from exc
    R = solve_triangular(L, np.eye(m.mean.size), lower=True)
    return GaussianParams.from_factor(m.mean, R)


def param_to_moment(p: GaussianParams) -> MomentParams:
    Rinv = solve_triangular(p.R, np.eye(p.dim), lower=True)
    return MomentParams(p.mean.copy(), Rinv @ Rinv.T)
