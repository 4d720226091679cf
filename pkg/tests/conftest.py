import numpy as np
import pytest

from opbranges.catalog import exponential_pair
from opbranges.debranges import validate

ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number:2d} {name}: {detail}")


def sinc_kernel(a, xi, z):
    """Paley-Wiener kernel sin(a(z - conj xi)) / (pi (z - conj xi)), with its limit a/pi."""
    d = complex(z) - np.conj(complex(xi))
    if d == 0:
        return a / np.pi
    return np.sin(a * d) / (np.pi * d)


@pytest.fixture(scope="session")
def pw_pi():
    return validate(*exponential_pair(np.pi, 1))


@pytest.fixture(scope="session")
def pw_factory():
    cache = {}

    def make(a, n=1):
        if (a, n) not in cache:
            cache[(a, n)] = validate(*exponential_pair(a, n))
        return cache[(a, n)]
    return make
