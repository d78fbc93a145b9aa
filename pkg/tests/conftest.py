import time

import pytest

from streams2s.training.pipeline import TrainingRun


@pytest.fixture(scope="session")
def trained(tmp_path_factory):
    """One full default training run, shared by every test that needs trained weights."""
    run = TrainingRun(tmp_path_factory.mktemp("run"))
    t0 = time.perf_counter()
    reports = {r.stage: r for r in run.run_all()}
    run.elapsed = time.perf_counter() - t0
    run.reports = reports
    return run


# ---- acceptance reporting ----

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): one end-to-end acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    prev = _ACCEPTANCE.get(number)
    failed = rep.failed or (prev is not None and prev[1] == "FAIL")
    if rep.when == "call" or rep.failed:
        _ACCEPTANCE[number] = (title, "FAIL" if failed else "PASS", rep.duration if rep.when == "call" else 0.0)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"AC{number:02d} {status}  {title}  ({secs:.1f}s)")
