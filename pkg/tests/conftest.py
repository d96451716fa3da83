import numpy as np
import pytest

from peerocp import ControlProblem, Grid
from peerocp.benchmarks import build_heat_problem

TRIPLETS = ("AP4o33vgi", "AP4o33vsi")


@pytest.fixture(params=TRIPLETS)
def triplet_name(request):
    return request.param


@pytest.fixture(scope="session")
def heat20():
    return build_heat_problem(20)


def scalar_problem(lam=-1.0, T=1.0, lower=-np.inf, upper=np.inf):
    """``y' = lam y + u`` with ``C = y(T)^2 / 2``; a dense toy for fast checks."""
    return ControlProblem(
        1, 1, T, [1.0],
        f=lambda t, y, u: lam * y + u,
        jac_y=lambda t, y, u: np.array([[lam]]),
        jac_u=lambda t, y, u: np.array([[1.0]]),
        objective=lambda yT: 0.5 * float(yT @ yT),
        objective_grad=lambda yT: np.asarray(yT, dtype=float),
        lower=lower, upper=upper, name="scalar",
    )


def random_grid(T, steps, lo=0.8, hi=1.25, seed=0):
    """Grid whose consecutive ratios stay inside ``[lo, hi]``."""
    rng = np.random.default_rng(seed)
    h = [1.0]
    for _ in range(steps - 1):
        h.append(h[-1] * rng.uniform(lo, hi))
    h = np.array(h) / np.sum(h) * T
    return Grid(np.concatenate([[0.0], np.cumsum(h)]))


# lines collected by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
