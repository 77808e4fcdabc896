import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance check; returns whether it passed.

    Each call prints a ``PASS``/``FAIL`` line immediately and again in the
    terminal summary so the verdicts survive output capture.
    """

    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        _LINES.append(line)
        print(line)
        return bool(passed)

    return record


def record_skip(name, reason):
    line = f"SKIP  {name}  ({reason})"
    _LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
