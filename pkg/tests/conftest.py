from pathlib import Path

import pytest

from lineplan.network import Instance, Line, LineConcept, LinePool, Link

DATA = Path(__file__).resolve().parent.parent / "data" / "fixture"

_criteria: dict[int, dict] = {}


def three_station_instance(od=120.0, lower=2, upper=4) -> Instance:
    links = (Link("a1", "s1", "s2", 10.0, lower, upper), Link("a2", "s2", "s3", 10.0, lower, upper))
    return Instance(("s1", "s2", "s3"), links, {("s1", "s3"): od} if od else {})


def three_line_pool(inst: Instance) -> LinePool:
    return LinePool.build(inst, [
        Line("l1", ("a1",), cost_per_trip=1.0, capacity=60),
        Line("l2", ("a2",), cost_per_trip=1.0, capacity=30),
        Line("l3", ("a1", "a2"), cost_per_trip=1.8, capacity=60),
    ])


@pytest.fixture
def inst():
    return three_station_instance()


@pytest.fixture
def pool(inst):
    return three_line_pool(inst)


@pytest.fixture
def concept():
    return LineConcept({"l1": 1, "l2": 2, "l3": 1})


@pytest.fixture
def data_dir():
    return DATA


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    entry = _criteria.setdefault(number, {"title": report.criterion_title, "ok": True, "seen": False})
    if report.when == "call" or report.failed:
        entry["seen"] = True
        entry["ok"] = entry["ok"] and not report.failed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is not None:
        report.criterion, report.criterion_title = mark.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")
