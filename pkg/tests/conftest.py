import pytest
from hypothesis import settings

# first calls into numba kernels include compile or cache-load time
settings.register_profile("mmfees", deadline=None)
settings.load_profile("mmfees")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Record one PASS/FAIL line per acceptance criterion and echo it immediately."""

    def _report(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
