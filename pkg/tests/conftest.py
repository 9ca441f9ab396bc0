import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest  # noqa: E402

_ACCEPTANCE = {}


class AcceptanceLog:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def __init__(self, number, title):
        self.number, self.title = number, title
        self.details = []
        self.ok = None

    def note(self, text):
        self.details.append(text)

    def check(self, condition, text):
        self.note(("ok   " if condition else "FAIL ") + text)
        self.ok = bool(condition) and self.ok is not False
        return bool(condition)


@pytest.fixture
def criterion(request):
    def make(number, title):
        log = AcceptanceLog(number, title)
        _ACCEPTANCE[number] = log
        return log
    return make


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        log = _ACCEPTANCE[n]
        verdict = "PASS" if log.ok else "FAIL"
        tr.write_line(f"[{verdict}] criterion {n}: {log.title}")
        for d in log.details:
            tr.write_line(f"         {d}")
