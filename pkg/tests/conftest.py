import sys


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
    missing = [n for n in range(1, 9) if n not in lines]
    for number in missing:
        terminalreporter.write_line(f"[FAIL] criterion {number}: did not run to completion")
