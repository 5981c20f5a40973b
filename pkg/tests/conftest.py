import numpy as np
import pytest

from randeeponet.pde import generate_dataset

_VERDICTS = {}
_NOTES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        verdict = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        prev = _VERDICTS.get(name)
        # a criterion spread over several tests fails if any part fails
        if prev is None or prev[0] == "PASS" or verdict == "FAIL":
            _VERDICTS[name] = (verdict, item.name)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_VERDICTS):
        verdict, test = _VERDICTS[name]
        terminalreporter.write_line(f"{name}: {verdict} ({test})")
        for line in _NOTES.get(name, []):
            terminalreporter.write_line(f"    {line}")


@pytest.fixture
def note(request):
    """Attach a measured value to the acceptance summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")
    name = marker.args[0] if marker else request.node.name

    def add(text):
        _NOTES.setdefault(name, []).append(text)
        print(text)
    return add


@pytest.fixture(scope="session")
def dynamical_small():
    return generate_dataset("dynamical", 40, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
