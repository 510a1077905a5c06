"""Shared pytest plumbing: surface acceptance-criterion verdict lines.

The acceptance tests register one `[criterion NN] PASS/FAIL` line each; pytest
captures per-test stdout, so a summary hook replays them at the end of the run
where they are always visible.
"""

CRITERION_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)
