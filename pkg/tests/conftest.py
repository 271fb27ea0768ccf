import math

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def within_sigma(observed: float, p: float, trials: int, k: float) -> tuple[bool, float]:
    """Binomial k-sigma check; returns (ok, z).  Degenerate p must match exactly."""
    sigma = math.sqrt(p * (1 - p) / trials)
    if sigma == 0:
        return observed == p, 0.0 if observed == p else math.inf
    z = (observed - p) / sigma
    return abs(z) <= k, z


@pytest.fixture
def acceptance_report(request):
    lines = request.config.stash.setdefault(_KEY, [])

    def report(number: int, ok: bool, detail: str):
        lines.append((number, ok, detail))

    return report


_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_KEY, None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
