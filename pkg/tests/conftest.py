import sys
from pathlib import Path

# test helpers (oracles.py) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

#: one ``PASS|FAIL  criterion  detail`` line per acceptance check, in run order
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
