import numpy as np
import pytest

from quanta import GaussianMixtureTarget, set_backend, get_backend_name


@pytest.fixture
def five_mode():
    return GaussianMixtureTarget([0.2] * 5, [-200, -100, 0, 100, 200], 0.01, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    """Run a test once per kernel backend, restoring the active one afterwards."""
    before = get_backend_name()
    set_backend(request.param)
    yield request.param
    set_backend(before)


_REPORT_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT_KEY] = []


@pytest.fixture
def criterion(request):
    """Record and print a ``CRITERION n: PASS|FAIL`` line, then assert it."""
    lines = request.config.stash[_REPORT_KEY]

    def check(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_REPORT_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
