from . import test_acceptance


def pytest_terminal_summary(terminalreporter):
    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
