import numpy as np
import pytest

from doublewell import backend
from doublewell.core import species
from doublewell.electrode_model import build_analytic_basis


@pytest.fixture(scope="session")
def basis():
    return build_analytic_basis()


@pytest.fixture(scope="session")
def proton():
    return species("proton")


@pytest.fixture(scope="session")
def antiproton():
    return species("antiproton")


@pytest.fixture(scope="session")
def be():
    return species("beryllium9_ion")


@pytest.fixture(params=sorted(backend.BACKENDS))
def backend_name(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance():
    def report(number, title, ok, detail):
        line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print("\n" + line)
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
