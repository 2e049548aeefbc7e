import pytest

from latres.oracle import resonances_1d_complex_scaling
from latres.potentials import gaussian


@pytest.fixture(scope="session")
def barrier_oracle():
    """Complex-scaling reference for the barrier ``8 exp(-x^2/2)``."""
    return resonances_1d_complex_scaling(gaussian(8.0), alpha=0.25, box=60.0, M=6000, levels=3)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one summary line per acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def log(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        lines.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
