import numpy as np
import pytest

from geosic import spectral
from geosic.geodesic import ShootingConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_config(full=(32, 32), steps=10):
    return ShootingConfig(time_steps=steps, operator=spectral.SobolevOperator(full_shape=full))


def blob(shape, cx, cy, width=5.0):
    y, x = np.indices(shape, dtype=float)
    return np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width ** 2))


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def report(request):
    """``report(n, ok, detail)`` records one acceptance line and returns ``ok``."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
