"""Collects acceptance outcomes and prints one line per criterion after the run."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[props["criterion"]] = (report.outcome, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        outcome, detail = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
