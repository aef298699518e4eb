import numpy as np
import pytest

from matleaf.response import ScalarProfile, radial_model

ACCEPTANCE_LINES = {}


def record(criterion: int, passed: bool, detail: str):
    """Store the one-line verdict printed at the end of the session."""
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


PROFILES = {
    "constant": ScalarProfile.constant(),
    "monotone": ScalarProfile.monotone(),
    "plateau": ScalarProfile.plateau(0.5),
    "wiggle": ScalarProfile.wiggle(0.125),
}


@pytest.fixture(scope="session")
def models():
    return {k: radial_model(p) for k, p in PROFILES.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def seeded_points(seed, n, rmin, rmax):
    """Points uniform in the shell rmin <= |X| <= rmax."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        u = rng.uniform(-1, 1, 3)
        if rmin**2 <= u @ u <= rmax**2:
            out.append(u)
    return np.array(out)


def random_invertible(rng):
    while True:
        F = rng.uniform(-1, 1, (3, 3))
        if abs(np.linalg.det(F)) >= 0.1:
            return F
