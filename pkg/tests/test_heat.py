import numpy as np
import pytest

from peerocp import Grid
from peerocp.benchmarks.heat import Heat1D, HeatExact, build_heat_problem, phi1
from peerocp.workflows import heat_errors, run_optimizer


def test_phi1():
    assert phi1(0.0) == 1.0
    assert phi1(1e-9) == pytest.approx(1.0 + 5e-10)
    assert phi1(2.0) == pytest.approx((np.exp(2.0) - 1) / 2)


def test_eigenpairs_full_scale():
    ex = HeatExact(250)
    A = Heat1D(250).A
    res = np.abs(A @ ex.V - ex.V * ex.lam).max()
    assert res <= 1e-9 * np.abs(ex.lam).max()
    assert np.allclose(ex.V.T @ ex.V, np.eye(250), atol=1e-10)


def test_adjoint_oracle_solves_adjoint_ode():
    ex = HeatExact(250)
    A = Heat1D(250).A
    t = np.linspace(0.0, 1.0, 7)
    e = 1e-6
    dp = (ex.p(t + e) - ex.p(t - e)) / (2 * e)
    res = -(A.T @ ex.p(t).T).T - dp
    assert np.abs(res).max() <= 1e-8 * max(1.0, np.abs(dp).max())


def test_exact_control_is_minimum_principle():
    ex = HeatExact(40)
    t = np.linspace(0, 1, 5)
    assert np.allclose(ex.u(t), -ex.gamma * ex.p(t)[..., -1])


def test_problem_rejects_tiny_grid():
    with pytest.raises(ValueError):
        build_heat_problem(3)


def test_augmented_problem_shapes(heat20):
    assert heat20.m == 21 and heat20.d == 1
    assert heat20.y0[-1] == 0.0 and heat20.has_hamiltonian_argmin


def test_discrete_optimum_converges_to_exact(heat20):
    errs = []
    for steps in (8, 16, 32):
        rep = run_optimizer(heat20, "AP4o33vgi", Grid.uniform(1.0, steps), tol=1e-10)
        errs.append(heat_errors(heat20, "AP4o33vgi", rep.solution, rep.U)["u"])
    assert errs[0] > errs[1] > errs[2]
    assert np.log2(errs[1] / errs[2]) > 2.5
