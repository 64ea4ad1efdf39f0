import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def planted_seminmf(p, k, n, seed):
    r = np.random.default_rng(seed)
    Z = r.standard_normal((p, k))
    H = r.uniform(size=(k, n))
    return Z, H, Z @ H


# one pass/fail line per acceptance criterion, printed after the run
_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    num = int(report.nodeid.split("test_criterion_")[1][:2])
    failed = report.failed or (report.when == "call" and not report.passed)
    if report.when == "call" or failed:
        _criteria[num] = _criteria.get(num, True) and not failed


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    from test_acceptance import CRITERIA

    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        status = "PASS" if _criteria[num] else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {status}  {CRITERIA[num]}")
