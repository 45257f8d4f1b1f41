import pytest

from lidarsot.diagnostics import gradcheck_suite, timed

# Lines collected by the acceptance suite, echoed in the terminal summary so
# they appear even when pytest captures test output.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def gradcheck_run():
    """The finite-difference suite is slow; run it once per session: (results, seconds)."""
    return timed(gradcheck_suite)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
