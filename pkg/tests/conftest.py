import pytest

from leakjet import kernels
from leakjet.model import FluidSpec, table1_layout
from leakjet.synth import Scenario

BACKENDS = sorted(kernels.BACKENDS)

_acceptance = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = kernels.backend_name()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


@pytest.fixture
def layout():
    return table1_layout()


@pytest.fixture
def scenario_factory():
    def make(**kw):
        kw.setdefault("layout", table1_layout())
        kw.setdefault("fluid", FluidSpec())
        kw.setdefault("duration_s", 4.0)
        kw.setdefault("seed", 1)
        kw.setdefault("rng", "pcg64")
        return Scenario(**kw)
    return make


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
