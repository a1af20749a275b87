import re
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERIA = pytest.StashKey[dict]()


def _order(key: str):
    number, suffix = re.match(r"(\d+)(.*)", key).groups()
    return int(number), suffix


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion."""
    lines = request.config.stash.setdefault(CRITERIA, {})

    def record(key, passed: bool, detail: str) -> bool:
        line = f"criterion {key} {'PASS' if passed else 'FAIL'} {detail}"
        lines[str(key)] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(CRITERIA, {})
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for key in sorted(lines, key=_order):
        terminalreporter.write_line(lines[key])
