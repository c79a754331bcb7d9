import re
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# filled by test_acceptance.py: (criterion, passed, detail)
CRITERIA = []


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    def order(row):
        num, rest = re.match(r"(\d+)(.*)", str(row[0])).groups()
        return int(num), rest

    for k, ok, detail in sorted(CRITERIA, key=order):
        terminalreporter.write_line(f"criterion {str(k):>3}: {'PASS' if ok else 'FAIL'}  {detail}")
