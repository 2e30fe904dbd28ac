import numpy as np
import pytest

from rectconv import ModelParams, canonical_sqrt_spectrum, make_spectrum

# registry for the acceptance suite: criterion number -> (ok, line)
ACCEPTANCE_RESULTS = {}


def record_criterion(num, ok, detail):
    tag = "PASS" if ok else "FAIL"
    ACCEPTANCE_RESULTS[num] = (ok, f"[{tag}] criterion {num:2d}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[num][1])


@pytest.fixture(scope="session")
def mp_unit():
    """All-zero spectrum with c = 1, t = 1: every observable has a closed form."""
    p = 50
    return make_spectrum(np.zeros(p)), ModelParams(p=p, n=p, t=1.0)


@pytest.fixture(scope="session")
def canonical_small():
    p = 100
    return canonical_sqrt_spectrum(p, 1.0), ModelParams(p=p, n=2 * p, t=0.2)
