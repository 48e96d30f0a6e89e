import pytest

_GATE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def gate():
    """Record an acceptance verdict, then assert it."""

    def record(criterion: int, ok: bool, detail: str) -> None:
        _GATE[criterion] = (bool(ok), detail)
        assert ok, f"criterion {criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _GATE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_GATE):
        ok, detail = _GATE[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
