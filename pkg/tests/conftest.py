import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

# One line per acceptance criterion, filled in by tests/test_acceptance.py and
# printed after the run so the verdicts survive output capturing.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
