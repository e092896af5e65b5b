"""Shared pytest plumbing.

The acceptance tests append one verdict line each to ``ACCEPTANCE_LINES``;
printing them from a terminal-summary hook keeps them visible in the normal
captured-output run, pass or fail.
"""

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
