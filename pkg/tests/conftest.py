import numpy as np
import pytest

# criterion number -> list of (part, passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record():
    def _record(criterion, part, passed, detail):
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
        return passed
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[k]
        status = "PASS" if all(p for _, p, _ in parts) else "FAIL"
        tr.write_line(f"criterion {k:>2}: {status}")
        for part, passed, detail in parts:
            tr.write_line(f"    [{'ok' if passed else 'FAILED'}] {part}: {detail}")
