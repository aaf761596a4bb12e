"""Independent posterior oracles: conjugate closed form, grid quadrature, RW-MH."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError
from .gaussian import GaussianParams, MomentParams
from .models import evaluate_phi


@dataclass(frozen=True)
class LinearGaussianProblem:
    A: np.ndarray
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_sd: float
    data: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        m = np.atleast_1d(np.asarray(self.prior_mean, dtype=float))
        C = np.atleast_2d(np.asarray(self.prior_cov, dtype=float))
        y = np.atleast_1d(np.asarray(self.data, dtype=float))
        if A.shape != (y.size, m.size) or C.shape != (m.size, m.size):
            raise ContractError("inconsistent shapes in linear-Gaussian problem")
        if self.noise_sd <= 0:
            raise ContractError("noise_sd must be positive")
        np.linalg.cholesky(C)  # raises if not SPD
        for name, val in zip(("A", "prior_mean", "prior_cov", "data"), (A, m, C, y)):
            object.__setattr__(self, name, val)


def linear_gaussian_posterior(p: LinearGaussianProblem) -> MomentParams:
    prior_prec = np.linalg.inv(p.prior_cov)
    post_prec = prior_prec + p.A.T @ p.A / p.noise_sd**2
    cov = np.linalg.inv(post_prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prior_prec @ p.prior_mean + p.A.T @ p.data / p.noise_sd**2)
    return MomentParams(mean, cov)


@dataclass(frozen=True)
class GridPosterior:
    mean: np.ndarray
    covariance: np.ndarray
    log_normalizer: float
    axes: tuple
    density: np.ndarray  # normalised posterior density on the tensor grid

    def credible_mass(self, point) -> float:
        """Posterior mass of the highest-density region whose boundary passes
        through ``point`` (density interpolated linearly on the grid)."""
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(self.axes, self.density, bounds_error=False, fill_value=0.0)
        level = float(interp(np.atleast_1d(point)[None, :])[0])
        w = _trapezoid_weights(self.axes)
        return float(np.sum((self.density * w)[self.density > level]))


def _trapezoid_weights(axes) -> np.ndarray:
    ws = []
    for ax in axes:
        h = np.diff(ax)
        w = np.zeros_like(ax)
        w[:-1] += h / 2
        w[1:] += h / 2
        ws.append(w)
    return ws[0] if len(ws) == 1 else np.multiply.outer(ws[0], ws[1])


def grid_posterior_moments(phi, prior: GaussianParams, bounds, grid_n: int, check_coverage=True) -> GridPosterior:
    """Tensor-trapezoid quadrature of exp(-Phi) q on a box in d <= 2."""
    d = prior.dim
    if d > 2:
        raise ContractError(f"grid quadrature supports d <= 2, got d={d}")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    if bounds.shape != (d, 2):
        raise ContractError(f"bounds must have shape ({d}, 2)")
    if check_coverage:
        sd = np.sqrt(np.diag(np.linalg.inv(prior.precision)))
        if np.any(bounds[:, 0] > prior.mean - 6 * sd) or np.any(bounds[:, 1] < prior.mean + 6 * sd):
            raise ContractError("bounds must cover at least 6 prior standard deviations")
    axes = tuple(np.linspace(lo, hi, grid_n) for lo, hi in bounds)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    log_dens = prior.logpdf_batch(pts) - evaluate_phi(phi, pts)
    w = _trapezoid_weights(axes).ravel()
    log_z = float(logsumexp(log_dens, b=w))
    dens = np.exp(log_dens - log_z)
    pw = dens * w
    mean = pts.T @ pw
    c = pts - mean
    cov = (c * pw[:, None]).T @ c
    return GridPosterior(mean, 0.5 * (cov + cov.T), log_z, axes, dens.reshape(mesh[0].shape))


def rwmh(phi, prior: GaussianParams, n_steps: int, step_sd, seed, start=None):
    """Gaussian random-walk Metropolis on exp(-Phi) q.

    Returns the chain (n_steps x d, first row is the state after one step)
    and the acceptance rate.
    """
    if n_steps < 1:
        raise ContractError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    d = prior.dim
    step_sd = np.broadcast_to(np.asarray(step_sd, dtype=float), (d,))
    x = prior.mean.copy() if start is None else np.asarray(start, dtype=float).copy()

    def log_target(z):
        return prior.logpdf_batch(z[None, :])[0] - phi(z)

    lp = log_target(x)
    proposals = rng.standard_normal((n_steps, d)) * step_sd
    log_u = np.log(rng.uniform(size=n_steps))
    chain = np.empty((n_steps, d))
    accepted = 0
    for i in range(n_steps):
        y = x + proposals[i]
        lp_y = log_target(y)
        if log_u[i] < lp_y - lp:
            x, lp = y, lp_y
            accepted += 1
        chain[i] = x
    return chain, accepted / n_steps


def adaptive_grid_posterior(phi, prior: GaussianParams, grid_n: int, width: float = 8.0, zooms: int = 2) -> GridPosterior:
    """Grid posterior that first covers +-``width`` prior sds, then re-grids
    ``zooms`` times on +-``width`` posterior sds around the current mean.

    Concentrated posteriors need the zoom: on the prior box they may span
    only a couple of grid cells.
    """
    sd = np.sqrt(np.diag(np.linalg.inv(prior.precision)))
    bounds = np.column_stack([prior.mean - width * sd, prior.mean + width * sd])
    gp = grid_posterior_moments(phi, prior, bounds, grid_n)
    for _ in range(zooms):
        post_sd = np.sqrt(np.diag(gp.covariance))
        bounds = np.column_stack([gp.mean - width * post_sd, gp.mean + width * post_sd])
        gp = grid_posterior_moments(phi, prior, bounds, grid_n, check_coverage=False)
    return gp
