"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (repeated in the terminal summary) before
asserting, so a failing criterion is still reported with its measured value.
"""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import central_difference, random_gaussian, report_criterion
from homotopy_bayes.config import load_config
from homotopy_bayes.experiment import run_experiment
from homotopy_bayes.flow import EstimatorConfig, estimate_fisher, run_flow, run_homotopy
from homotopy_bayes.gaussian import GaussianParams, logpdf, param_to_moment, score
from homotopy_bayes.mixture import MixtureParams, mix_logpdf, mix_score
from homotopy_bayes.models import LinearModel, NegLogLikelihood
from homotopy_bayes.reference import LinearGaussianProblem, linear_gaussian_posterior
from homotopy_bayes.scatter import CATALOG_NAMES
from oracles import (
    heat_refinement_ratios,
    heat_series_error,
    heat_symmetry_error,
    scatter_circle_error,
    scatter_reciprocity_error,
)

CONFIGS = Path(__file__).parent.parent / "configs"
_runs = {}


def _run_twice(name, tmp_root):
    """Run a shipped config twice into separate directories (cached per session)."""
    if name not in _runs:
        results = []
        for rep in ("a", "b"):
            out = tmp_root / f"{name}_{rep}"
            start = time.perf_counter()
            try:
                summary, error = run_experiment(load_config(CONFIGS / f"{name}.toml"), out, log=lambda m: None), None
            except Exception as exc:  # recorded, judged by the caller
                summary, error = None, exc
            results.append((out, summary, error, time.perf_counter() - start))
        _runs[name] = results
    return _runs[name]


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_criterion_1_score_correctness():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for d in (1, 2, 5):
        for _ in range(200):
            g = random_gaussian(rng, d)
            x = g.mean + rng.normal(size=d)
            fd = central_difference(lambda eta: logpdf(g.with_vector(eta), x), g.to_vector())
            worst = max(worst, np.abs(score(g, x) - fd).max() / np.abs(fd).max())
    for M in (2, 3):
        for d in (1, 2):
            for _ in range(200):
                mix = MixtureParams(tuple(random_gaussian(rng, d) for _ in range(M)), rng.normal(scale=2, size=M - 1))
                x = rng.normal(size=d)
                fd = central_difference(lambda eta: mix_logpdf(mix.with_vector(eta), x), mix.to_vector())
                worst = max(worst, np.abs(mix_score(mix, x) - fd).max() / np.abs(fd).max())
    elapsed = time.perf_counter() - start
    ok = worst < 1e-5 and elapsed < 10
    report_criterion(1, ok, f"worst relative score error {worst:.2e} over 1400 pairs, {elapsed:.1f} s")
    assert ok


def test_criterion_2_fisher_oracle():
    start = time.perf_counter()
    F = estimate_fisher(GaussianParams.standard(1), EstimatorConfig(n_samples=10**5, ridge=0.0, seed=0))
    elapsed = time.perf_counter() - start
    exact = np.diag([1.0, 2.0])
    diag_rel = np.abs(np.diag(F) - np.diag(exact)) / np.diag(exact)
    # zero off-diagonal has no relative scale: 5% of the smallest diagonal entry
    off = abs(F[0, 1])
    ok = diag_rel.max() < 0.05 and off < 0.05 and elapsed < 5
    report_criterion(2, ok, f"diag rel err {diag_rel.max():.4f}, |off-diag| {off:.4f}, {elapsed:.2f} s")
    assert ok


def test_criterion_3_conjugate_flow():
    start = time.perf_counter()
    phi = NegLogLikelihood(LinearModel([[1.0]]), [1.0], 1.0)
    hits_1d = 0
    for seed in range(10):
        m = param_to_moment(run_homotopy(GaussianParams.standard(1), phi,
                                         EstimatorConfig(n_samples=10**4, dt=0.01, seed=seed)).final)
        hits_1d += abs(m.mean[0] - 0.5) / 0.5 < 0.02 and abs(m.covariance[0, 0] - 0.5) / 0.5 < 0.02
    A = np.array([[1.0, 0.0], [1.0, 1.0]])
    y = np.array([1.0, -0.5])
    exact = linear_gaussian_posterior(LinearGaussianProblem(A, [0, 0], np.eye(2), 0.5, y))
    hits_2d = 0
    for seed in range(10):
        m = param_to_moment(run_flow(GaussianParams.standard(2), LinearModel(A), y, 0.5,
                                     EstimatorConfig(n_samples=10**4, dt=0.01, seed=seed)).final)
        mean_ok = np.all(np.abs(m.mean - exact.mean) / np.abs(exact.mean) < 0.03)
        var_ok = np.all(np.abs(np.diag(m.covariance) - np.diag(exact.covariance)) / np.diag(exact.covariance) < 0.03)
        hits_2d += bool(mean_ok and var_ok)
    elapsed = time.perf_counter() - start
    ok = hits_1d >= 9 and hits_2d >= 9 and elapsed < 120
    report_criterion(3, ok, f"1D {hits_1d}/10 within 2%, 2D {hits_2d}/10 within 3%, {elapsed:.1f} s")
    assert ok


def test_criterion_4_deviation_equivalence():
    start = time.perf_counter()
    phi = NegLogLikelihood(LinearModel([[1.0, 0.5]]), [0.3], 0.5)
    prior = GaussianParams.standard(2)
    runs = [run_homotopy(prior, phi, EstimatorConfig(n_samples=2000, dt=0.01, seed=5, deviation=dev))
            for dev in ("kl", "hellinger")]
    identical = len(runs[0].states) == len(runs[1].states) and all(
        s.t == u.t and s.params.to_vector().tobytes() == u.params.to_vector().tobytes()
        for s, u in zip(*runs)
    )
    elapsed = time.perf_counter() - start
    ok = identical and elapsed < 60
    report_criterion(4, ok, f"KL vs Hellinger trajectories bit-identical: {identical}, {elapsed:.1f} s")
    assert ok


def test_criterion_5_heat_oracle():
    start = time.perf_counter()
    series = heat_series_error(64)
    sym = heat_symmetry_error()
    _, (ratio,) = heat_refinement_ratios()
    elapsed = time.perf_counter() - start
    ok = series < 0.005 and sym < 1e-10 and ratio >= 3 and elapsed < 60
    report_criterion(5, ok, f"series rel err {series:.2e}, symmetry {sym:.1e}, refinement ratio {ratio:.2f}, "
                            f"{elapsed:.1f} s")
    assert ok


def test_criterion_6_scattering_oracle():
    start = time.perf_counter()
    circle = scatter_circle_error(n=64, k=1.0)
    recip = {name: scatter_reciprocity_error(name, n=128) for name in CATALOG_NAMES}
    elapsed = time.perf_counter() - start
    worst = max(recip.values())
    ok = circle < 1e-6 and worst < 1e-6 and len(recip) == 8 and elapsed < 120
    report_criterion(6, ok, f"circle rel err {circle:.1e}, worst reciprocity {worst:.1e} over {len(recip)} shapes, "
                            f"{elapsed:.1f} s")
    assert ok


def test_criterion_7_heat2_inversion(run_root):
    out, summary, error, elapsed = _run_twice("heat2", run_root)[0]
    if error is not None:
        report_criterion(7, False, f"flow failed: {type(error).__name__}: {error}")
        raise error
    mass = summary["comparison"]["grid_credible_mass_of_flow_mean"]
    ok = summary["t_final"] == 1.0 and mass <= 0.99 and elapsed < 600
    report_criterion(7, ok, f"t_final {summary['t_final']}, flow mean at grid credible level {mass:.3f}, "
                            f"{elapsed:.1f} s")
    assert ok


def test_criterion_8_scatter_inversion(run_root):
    out, summary, error, elapsed = _run_twice("scatter_pear", run_root)[0]
    if error is not None:
        failure = json.loads((out / "failure.json").read_text())
        report_criterion(8, False, f"flow did not complete: {failure['error']} at t={failure['last_t']} "
                                   f"({failure['message']}), {elapsed:.1f} s")
        pytest.fail(f"scatter flow failed: {failure['error']}: {failure['message']}")
    h = summary["hausdorff_to_truth"]
    ok = summary["t_final"] == 1.0 and h < 0.15 and elapsed < 1800
    report_criterion(8, ok, f"Hausdorff distance to truth {h:.4f}, {elapsed:.1f} s")
    assert ok


def _tree_bytes(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir()) if p.is_file()}


def test_criterion_9_determinism(run_root):
    report = []
    ok = True
    for name in ("linear_1d", "heat2", "scatter_pear"):
        (a, *_), (b, *_) = _run_twice(name, run_root)
        fa, fb = _tree_bytes(a), _tree_bytes(b)
        same = bool(fa) and fa == fb
        ok &= same
        report.append(f"{name} {len(fa)} files {'identical' if same else 'DIFFER'}")
    report_criterion(9, ok, ", ".join(report))
    assert ok
