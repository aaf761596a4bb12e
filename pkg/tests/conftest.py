import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def random_gaussian(rng, d, spread=0.5):
    from homotopy_bayes.gaussian import GaussianParams

    R = np.tril(rng.normal(scale=spread, size=(d, d)), -1)
    R[np.diag_indices(d)] = np.exp(rng.normal(scale=spread, size=d))
    return GaussianParams.from_factor(rng.normal(size=d), R)


def central_difference(f, eta, h=1e-6):
    g = np.empty_like(eta)
    for i in range(eta.size):
        e = np.zeros_like(eta)
        e[i] = h
        g[i] = (f(eta + e) - f(eta - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def report_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
