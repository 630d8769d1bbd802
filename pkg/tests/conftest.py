import pathlib
import sys

import pytest

sys.path.insert(0, str(pathlib.Path(__file__).parent))

from qfi_lab import scenarios as Sc  # noqa: E402


@pytest.fixture(scope="session")
def scenario_reports():
    """Every scenario at its defaults, plus the second constant-curvature branch."""
    reports = {name: fn() for name, fn in Sc.SCENARIOS.items()}
    reports["constant-curvature/a3_nonzero"] = Sc.run_constant_curvature(E0=-1.0)
    return reports


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, then assert it."""
    log = request.config.stash[ACCEPTANCE]

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}" + (f"  ({detail})" if detail else "")
        log.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
