import time

import numpy as np
import pytest

from fuzzstoch.microdata import FiberMapSpec, extract_1d_samples, generate_microstructure, rasterize

# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture(scope="session")
def timed_fiber_map():
    t0 = time.perf_counter()
    fm = generate_microstructure(FiberMapSpec())
    return fm, time.perf_counter() - t0


@pytest.fixture(scope="session")
def fiber_map(timed_fiber_map):
    return timed_fiber_map[0]


@pytest.fixture(scope="session")
def binary_map(fiber_map):
    return rasterize(fiber_map, 1.0)


@pytest.fixture(scope="session")
def extracted(binary_map):
    return extract_1d_samples(binary_map)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class CriterionRecorder:
    def __init__(self, number: int):
        self.number = number
        self.checks: list = []

    def check(self, name: str, ok, detail: str = "") -> None:
        self.checks.append((name, bool(ok), detail))

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for _, ok, _ in self.checks)

    def summary(self) -> str:
        parts = []
        for name, ok, detail in self.checks:
            status = "ok" if ok else "FAILED"
            parts.append(f"{name} {status} ({detail})" if detail else f"{name} {status}")
        return "; ".join(parts)

    def assert_all(self) -> None:
        failed = [n for n, ok, _ in self.checks if not ok]
        assert self.checks and not failed, f"criterion {self.number}: {self.summary()}"


@pytest.fixture
def criterion(request):
    """Collects the sub-checks of one acceptance criterion for the summary table."""
    rec = CriterionRecorder(int(request.node.get_closest_marker("criterion").args[0]))
    yield rec
    report = getattr(request.node, "call_report", None)
    if report is None or (report.failed and not rec.checks):
        ACCEPTANCE_RESULTS[rec.number] = (False, "did not complete")
    elif report.failed and rec.passed:
        ACCEPTANCE_RESULTS[rec.number] = (False, rec.summary() + "; raised before finishing")
    else:
        ACCEPTANCE_RESULTS[rec.number] = (rec.passed and report.passed, rec.summary())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.call_report = report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}: {detail}")
