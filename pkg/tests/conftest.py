ACCEPTANCE_LINES = {}


def record(key, passed, text):
    ACCEPTANCE_LINES[key] = f"{key} [{'PASS' if passed else 'FAIL'}] {text}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
