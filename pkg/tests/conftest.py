import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from fedwsurv.core import Dataset

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_dataset(rng, n=200, k=3, sites=1, censor=0.0, names=None):
    names = names or tuple(f"x{j + 1}" for j in range(k))
    x = rng.normal(size=(n, k))
    a = (rng.random(n) < 0.5).astype(int)
    logt = 1.0 + x @ np.linspace(0.3, -0.2, k) + a * (0.5 - 0.2 * x[:, 0]) + rng.normal(size=n)
    delta = (rng.random(n) >= censor).astype(int)
    site = np.sort(rng.integers(1, sites + 1, size=n)) if sites > 1 else np.ones(n, int)
    return Dataset(names, np.arange(1, n + 1), site, x, a, np.exp(logt), delta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
