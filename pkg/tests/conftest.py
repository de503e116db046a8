import numpy as np
import pytest

from phcdiode.devicecfg import load_preset


@pytest.fixture(scope="session")
def paper():
    return load_preset("paper_device")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion; call the returned function with a summary."""
    number = request.node.get_closest_marker("criterion").args[0]
    _ACCEPTANCE[number] = ("FAIL", request.node.name)

    def done(summary):
        _ACCEPTANCE[number] = ("PASS", summary)
        print(f"criterion {number:2d}: PASS  {summary}")

    return done


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, text = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {text}")
