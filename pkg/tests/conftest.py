import pytest

# measured values collected by the acceptance suite, printed after the run
ACCEPTANCE_NOTES = []


@pytest.fixture
def note():
    def add(criterion, text):
        ACCEPTANCE_NOTES.append((criterion, text))
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_NOTES:
        return
    terminalreporter.section("acceptance measurements")
    for criterion, text in ACCEPTANCE_NOTES:
        terminalreporter.write_line(f"criterion {criterion}: {text}")
