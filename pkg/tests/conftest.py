import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_cloud(rng, n, n_bases=4, spread=1.0):
    from hgsc.gs_core import GaussianCloud

    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return GaussianCloud.from_arrays(rng.uniform(-spread, spread, (n, 3)),
                                     rng.uniform(-4, -1, (n, 3)), q, rng.normal(size=n),
                                     rng.normal(scale=0.5, size=(n, n_bases, 3)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
