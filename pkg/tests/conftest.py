import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for text in sorted(lines, key=lambda t: int(t.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(text)
