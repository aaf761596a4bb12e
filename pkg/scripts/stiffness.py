"""Gauss-Newton spectrum of the data misfit at the prior mean.

For a Gaussian family and an explicit Euler step the mean update near a
quadratic misfit with curvature h contracts by (1 - dt h / r^2), r^2 being the
current precision; dt * h far above 2 overshoots. This script prints the
misfit Hessian eigenvalues (Gauss-Newton, finite-difference Jacobian) and
dt * lambda_max for each config.

    python3 scripts/stiffness.py configs/heat2.toml configs/scatter_pear.toml
"""

import argparse

import numpy as np

from homotopy_bayes.config import load_config
from homotopy_bayes.experiment import build_problem


def jacobian(f, x, h=1e-6):
    f0 = f(x)
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        J[:, i] = (f(x + e) - f(x - e)) / (2 * h)
    return J


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    args = ap.parse_args(argv)
    np.set_printoptions(precision=4, suppress=True, linewidth=120)
    for path in args.configs:
        cfg = load_config(path)
        p = build_problem(cfg)
        x0 = p.prior.mean
        J = jacobian(lambda x: np.asarray(p.model(x), dtype=float), x0)
        H = J.T @ J / p.noise_sd**2
        lam = np.linalg.eigvalsh(H)
        print(f"{path}: d={x0.size}, noise sd {p.noise_sd:.4g}, misfit at prior mean {p.phi(x0):.4g}")
        print(f"  eigenvalues {lam}")
        print(f"  dt = {cfg.flow.dt:g}: dt * lambda_max = {cfg.flow.dt * lam[-1]:.3g}")


if __name__ == "__main__":
    main()
