import pytest

RESULTS = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one line per acceptance criterion for the terminal summary."""

    def record(number, name, passed, detail):
        RESULTS[number] = (name, passed, detail)
        print(f"[criterion {number}] {'PASS' if passed else 'FAIL'} {name}: {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        name, passed, detail = RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if passed else 'FAIL'}  {name}  ({detail})")
