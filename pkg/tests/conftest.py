import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    'twrelay', deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile('twrelay')


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        / np.sqrt(2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section('acceptance criteria')
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion and fail the test if it fails.

    Call with the criterion number, a title and a list of
    ``(description, passed)`` checks.
    """
    def record(number, title, checks):
        failed = [d for d, ok in checks if not ok]
        status = 'PASS' if not failed else 'FAIL'
        detail = '; '.join(failed) if failed else \
            '; '.join(d for d, _ in checks)
        line = f"criterion {number} {status}: {title} ({detail})"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        assert not failed, line
    return record
