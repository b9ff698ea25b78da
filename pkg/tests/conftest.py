import pytest

CRITERIA = {
    1: "formula exactness",
    2: "AES correctness",
    3: "overhead table reproduction",
    4: "FIR properties",
    5: "simulator physics",
    6: "monotone protection trend",
    7: "capacitor saturation",
    8: "Nyquist guard",
    9: "infective soundness",
    10: "determinism",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        _outcomes.setdefault(marker.args[0], []).append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(runs) else "FAIL"
        tr.write_line(f"{status:7s} criterion {n:2d}: {name} ({len(runs or [])} checks)")
