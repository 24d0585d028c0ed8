import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one ``CRITERION ...`` line per acceptance check."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    lines = sorted(ACCEPTANCE_LINES, key=lambda s: s.split(":")[0])
    subs = [s for s in lines if s.startswith("CRITERION 6")]
    for line in lines:
        terminalreporter.write_line(line)
    if len(subs) == 5:
        failed = [s.split(":")[0][-2:] for s in subs if ": FAIL" in s]
        status = "FAIL (" + ", ".join(failed) + ")" if failed else "PASS"
        terminalreporter.write_line(f"CRITERION 6 (overall): {status}")
