import numpy as np
import pytest

from nlsqi.spectral import SpectralField, ball_mask, bracket, random_field


def ball_field(rng, N, n_modes=None, scale=1.0, decay=0.0):
    """Random field supported in |n| <= N, amplitudes scaled by <n>^-decay."""
    u = random_field(rng, N, n_modes, scale)
    n1, n2 = u.indices
    return SpectralField(np.where(ball_mask(n1, n2, N), u.coeffs * bracket(n1, n2) ** -decay, 0), N)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one PASS/FAIL line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: dict[str, str] = {}


def record_criterion(key: str, ok: bool, detail: str) -> str:
    line = f"CRITERION {key}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("ab")), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
