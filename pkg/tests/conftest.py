import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion and return the flag."""
    lines = request.config.stash[_LINES]

    def record(number: int, name: str, ok: bool, detail: str, elapsed: float, budget: float) -> bool:
        ok = bool(ok) and elapsed < budget
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail} [{elapsed:.1f} s < {budget:g} s]"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
