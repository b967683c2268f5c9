import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from surveybreaks import CompositionalPanel  # noqa: E402


def random_panel(rng, T=11, K=4, TR=9, n=4000, shift=None, noise=1.0):
    """Percentage panel: random smooth path plus multinomial-sized noise."""
    base = rng.dirichlet(np.full(K, 8.0)) * 100
    drift = rng.normal(scale=0.3, size=K)
    drift -= drift.mean()
    path = base + np.outer(np.arange(T), drift)
    if shift is not None:
        path[TR - 1:] += np.asarray(shift, float)
    path = np.clip(path, 2.0, None)
    path = path / path.sum(axis=1, keepdims=True) * 100
    sizes = np.full(T, float(n))
    noisy = np.array([rng.multinomial(int(n), p / 100) / n * 100 for p in path]) if noise else path
    noisy = np.clip(noisy, 0.05, None)
    noisy = noisy / noisy.sum(axis=1, keepdims=True) * 100
    return CompositionalPanel(tuple(range(1997, 1997 + T)), noisy, sizes, TR)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
