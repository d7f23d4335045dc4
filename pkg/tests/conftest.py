import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import strategies as st

from optomech_lab import gaussian_core as gc


def random_symplectic(rng, n, scale=0.6):
    """``exp(Omega H)`` for a random symmetric ``H`` is symplectic."""
    H = rng.normal(scale=scale, size=(2 * n, 2 * n))
    H = (H + H.T) / 2
    return sla.expm(gc.symplectic_form(n) @ H)


def random_state(rng, n, max_excess=2.0, scale=0.6):
    """Random physical covariance ``S diag(nu) S^T`` with ``nu >= 1/2``."""
    S = random_symplectic(rng, n, scale)
    nu = 0.5 + rng.uniform(0, max_excess, size=n)
    return S @ np.diag(np.repeat(nu, 2)) @ S.T


def random_stable_drift(rng, n):
    """Random drift with every eigenvalue in the open left half plane."""
    A = rng.normal(size=(2 * n, 2 * n))
    shift = np.max(np.linalg.eigvals(A).real) + rng.uniform(0.2, 1.0)
    return A - shift * np.eye(2 * n)


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print the one-line verdicts collected by the acceptance suite."""
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
