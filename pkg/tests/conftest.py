import sys
from datetime import date, timedelta
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from claimnet.ingest import ClaimRecord  # noqa: E402

_ACCEPTANCE: dict[str, list] = {}


def make_records(visits, start=date(2013, 4, 1)):
    """Records from (patient, physician, day_offset[, seq[, state[, specialty]]]) tuples."""
    out = []
    for k, v in enumerate(visits):
        patient, doc, day = v[:3]
        seq = v[3] if len(v) > 3 else 0
        state = v[4] if len(v) > 4 else doc[:2]
        spec = v[5] if len(v) > 5 else None
        out.append(ClaimRecord(f"C{k:06d}", doc, patient, "PR1", start + timedelta(days=day), seq, state, spec))
    return out


@pytest.fixture
def records_factory():
    return make_records


def pytest_collection_modifyitems(items):
    for item in items:
        if "test_acceptance.py" in item.nodeid and item.function.__doc__:
            item.user_properties.append(("criterion", item.function.__doc__.strip().splitlines()[0].rstrip(".")))


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or report.when == "teardown":
        return
    entry = _ACCEPTANCE.setdefault(report.nodeid, [dict(report.user_properties).get("criterion", report.nodeid),
                                                   "passed", 0.0])
    entry[2] += report.duration
    if report.outcome != "passed":
        entry[1] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome, duration in _ACCEPTANCE.values():
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {label}  ({duration:.2f}s)")
