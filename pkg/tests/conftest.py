import numpy as np
import pytest

from psca import kernels
from psca.lasso import as_problem, generate_nesterov
from psca.problem import BlockLayout, L1Box, Problem, QuadraticForm


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per available kernel backend."""
    prev = kernels.BACKEND
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture(scope="session")
def small_lasso():
    return generate_nesterov(50, 200, 0.05, lam=1.0, seed=3)


@pytest.fixture(scope="session")
def small_problem(small_lasso):
    return as_problem(small_lasso)


def random_qp(n=12, dims=None, lam=0.3, lo=-np.inf, hi=np.inf, seed=0, psd=True):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, n))
    h = m.T @ m / n + (0.1 * np.eye(n) if psd else -0.4 * np.eye(n))
    c = rng.standard_normal(n)
    layout = BlockLayout(dims) if dims is not None else BlockLayout.uniform(n)
    smooth = QuadraticForm(h, c)
    lf = max(abs(smooth.eig_min), abs(smooth.eig_max))
    return Problem(layout, smooth, L1Box(lam, lo, hi), lf)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
