import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "varidual" / "configs"


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


# -- acceptance summary: one line per criterion ------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    entry = _CRITERIA.setdefault(num, {"title": title, "passed": 0, "failed": 0, "xfailed": 0,
                                       "details": []})
    if rep.when == "call" or rep.outcome != "passed":
        if hasattr(rep, "wasxfail") and rep.skipped:
            entry["xfailed"] += 1
            entry["details"].append(f"{item.name}: strict xfail ({rep.wasxfail})")
        elif rep.failed:
            entry["failed"] += 1
            entry["details"].append(f"{item.name}: FAILED")
        elif rep.when == "call" and rep.passed:
            entry["passed"] += 1
        for key, value in item.user_properties:
            if key == "measured" and rep.when == "call":
                entry["details"].append(f"{item.name}: {value}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        e = _CRITERIA[num]
        if e["failed"]:
            status = "FAIL"
        elif e["xfailed"]:
            status = f"FAIL (unattainable part, {e['xfailed']} strict xfail; {e['passed']} checks pass)"
        else:
            status = "PASS"
        tr.write_line(f"criterion {num:2d} {e['title']}: {status}")
        for d in e["details"]:
            tr.write_line(f"    {d}")
