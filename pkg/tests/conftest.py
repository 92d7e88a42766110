import pytest

_verdicts = []


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict(name, {check: bool}, detail)`` -> overall bool."""

    def record(name, checks, detail=""):
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        line = detail + (f"  [failed: {', '.join(failed)}]" if failed else "")
        _verdicts.append((name, ok, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance")
    for name, ok, line in _verdicts:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name:<14} {line}")
