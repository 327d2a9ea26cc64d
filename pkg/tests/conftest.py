import numpy as np
import pytest

from geneo_dd.assembly import Assembler
from geneo_dd.coeffs import ProblemCoefficients, constant, inclusions_channels, zero_vector
from geneo_dd.grid import build_uniform_mesh


def helmholtz_like(a_max=50.0, kappa=0.0):
    """Inclusions diffusion, no convection, c+ = 0, c- = -kappa."""
    return ProblemCoefficients(inclusions_channels(a_max), zero_vector(), constant(0.0), constant(-kappa))


@pytest.fixture(scope="session")
def mesh40():
    return build_uniform_mesh((0, 1, 0, 1), 40, 40)


@pytest.fixture(scope="session")
def asm40(mesh40):
    return Assembler(mesh40, helmholtz_like(50.0, 1000.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict[int, str] = {}


def record_criterion(k: int, ok: bool, detail: str) -> None:
    """Remember and print one acceptance line; the caller asserts ``ok``."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
    CRITERIA[k] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[k])
