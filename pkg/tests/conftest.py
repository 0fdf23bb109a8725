import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from egpr.gp import NoiseModel, fit  # noqa: E402
from egpr.kernel import KernelParams  # noqa: E402


def random_problem(rng, n=10, d=2, s2=None, sx=None):
    """Random inputs, smooth targets and moderate hyperparameters."""
    X = rng.uniform(-2, 2, size=(n, d))
    y = np.sin(X @ rng.normal(size=d)) + 0.1 * rng.normal(size=n)
    params = KernelParams(np.log(rng.uniform(0.5, 2.0)), np.log(rng.uniform(0.6, 2.0, size=d)))
    s2 = rng.uniform(0.01, 0.2) if s2 is None else s2
    if sx is None:
        B = rng.normal(size=(d, d)) * 0.2
        Sx = B @ B.T
    else:
        Sx = sx
    return X, y, params, NoiseModel(s2, Sx)


def random_model(rng, **kw):
    X, y, params, noise = random_problem(rng, **kw)
    return fit(X, y, params, noise)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS):
        terminalreporter.write_line(line)
