import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record():
    """record(criterion, title, passed, detail) for the acceptance summary."""
    def _rec(criterion, title, passed, detail=""):
        _ACCEPTANCE.append((criterion, title, bool(passed), detail))
        return bool(passed)
    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, title, ok, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {crit:>2}. {title}: "
                      f"{detail}")
