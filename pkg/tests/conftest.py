import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from egrl.hwsim import HardwareModel
from egrl.workload import generate_synthetic

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


_OUTCOMES: dict[int, tuple[str, str]] = {}
_NOTES: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = rep.failed or (rep.when == "call" and rep.skipped)
    prev = _OUTCOMES.get(number, (title, "PASS"))[1]
    if rep.when == "call" or failed:
        _OUTCOMES[number] = (title, "FAIL" if failed or prev == "FAIL" else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, verdict = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}")
        for note in _NOTES.get(number, []):
            terminalreporter.write_line(f"               {note}")


@pytest.fixture
def measured(request):
    """Attach a measured value to the criterion line of the calling test."""
    mark = request.node.get_closest_marker("criterion")
    number = mark.args[0] if mark else 0
    return lambda text: _NOTES.setdefault(number, []).append(text)


# --------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="session")
def desk():
    return HardwareModel.desk()


@pytest.fixture(scope="session")
def chain3():
    return generate_synthetic("chain", 3, 0)


@pytest.fixture(scope="session")
def resnet57():
    return generate_synthetic("resnet_like", 57, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
