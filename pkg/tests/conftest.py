import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from readoutbench import kernels

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=sorted(kernels.BACKENDS))
def backend(request):
    """Each available kernel implementation in turn."""
    return kernels.BACKENDS[request.param]


def pytest_report_header(config):
    return (f"readoutbench kernel backends: {sorted(kernels.BACKENDS)} "
            f"(active: {kernels.BACKEND})")


ACCEPTANCE: dict[int, list[str]] = {}


def record_acceptance(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.setdefault(criterion, []).append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        for line in ACCEPTANCE[k]:
            terminalreporter.write_line(line)
