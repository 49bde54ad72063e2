import os
import sys
from contextlib import contextmanager

import pytest

sys.path.insert(0, os.path.dirname(__file__))
os.chdir(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

_LINES = pytest.StashKey[list]()


class Criterion:
    def __init__(self, number: int):
        self.number = number
        self.notes: list[str] = []
        self.failures: list[str] = []

    def check(self, ok: bool, note: str) -> bool:
        (self.notes if ok else self.failures).append(note)
        return ok

    def line(self) -> str:
        verdict = "FAIL" if self.failures else "PASS"
        detail = "; ".join(self.failures or self.notes)
        return f"criterion {self.number}: {verdict} ({detail})"


@pytest.fixture
def criterion(request):
    """Collects the sub-checks of one acceptance criterion and reports a single line."""

    @contextmanager
    def open_criterion(number: int):
        c = Criterion(number)
        try:
            yield c
        except Exception as e:
            c.failures.append(f"{type(e).__name__}: {e}")
            raise
        finally:
            line = c.line()
            print(line)
            request.config.stash.setdefault(_LINES, []).append(line)
        if c.failures:
            pytest.fail(line, pytrace=False)

    return open_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
