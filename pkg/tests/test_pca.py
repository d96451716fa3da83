import numpy as np
import pytest
import scipy.sparse as sp

from peerocp import Grid, forward_sweep
from peerocp.benchmarks.pca import (D3_TIMES, PCa2D, PCaParameters, build_pca_problem, laplacian,
                                    pca_observables, protocol_d3, protocol_u0, trapezoid_weights,
                                    with_parameters)


@pytest.fixture(scope="module")
def model():
    return PCa2D(16)


def test_parameters_validated():
    with pytest.raises(ValueError):
        PCaParameters(M=-1.0)
    par = with_parameters(PCaParameters(), M=3.0)
    assert par.M == 3.0 and PCaParameters().M == 2.5
    assert par.alpha_c == pytest.approx(15 * par.alpha_h)
    assert par.A < 0 < par.rho


def test_quadrature_of_constant_is_area():
    m, dx = 20, 3000 / 20
    W = trapezoid_weights(m, dx)
    assert W.sum() == pytest.approx(((m - 1) * dx) ** 2)


def test_neumann_laplacian_kills_constants():
    L = laplacian(8, 0.5, dirichlet=False)
    assert np.abs(L @ np.ones(64)).max() < 1e-12
    D = laplacian(8, 0.5, dirichlet=True)
    r = D @ np.ones(64)
    assert r.min() < 0 and r.max() <= 1e-12


def test_protocols():
    par = PCaParameters()
    t = np.array([0.0, 2.85, 7.9])
    d3 = protocol_d3(t)
    assert d3[0] == 0.0
    assert d3[1] == pytest.approx(par.m_ref * par.beta_c * 58.49)
    assert protocol_d3(np.nextafter(2.85, 0)) == 0.0
    assert protocol_u0(0.0) == pytest.approx(par.m_ref * par.beta_c * par.d_c)


def test_jacobian_matches_differences(model):
    rng = np.random.default_rng(0)
    y = model.y0 + 0.05 * rng.standard_normal(model.m)
    u = np.array([0.05])
    J = model.jac_y(0.0, y, u)
    v = rng.standard_normal(model.m)
    e = 1e-6
    fd = (model.f(0.0, y + e * v, u) - model.f(0.0, y - e * v, u)) / (2 * e)
    assert np.abs(J @ v - fd).max() <= 1e-6 * np.abs(fd).max()
    fdu = (model.f(0.0, y, u + e) - model.f(0.0, y, u - e)) / (2 * e)
    assert np.allclose(model.jac_u(0.0, y, u)[:, 0], fdu, atol=1e-6 * np.abs(fdu).max())


@pytest.mark.parametrize("trans", [False, True])
def test_shifted_solver(model, trans):
    y, u = model.y0, np.array([0.02])
    J = model.jac_y(0.0, y, u)
    M = sp.identity(model.m) * 0.7 - 0.3 * J
    b = np.random.default_rng(1).standard_normal(model.m)
    x = model.shifted_solver(0.7, 0.3, 0.0, y, u)(b, trans=trans)
    r = (M.T if trans else M) @ x - b
    assert np.abs(r).max() < 1e-9 * np.abs(b).max()


def test_min_resolution(model):
    with pytest.raises(ValueError):
        PCa2D(8)


def test_problem_and_observables():
    P = build_pca_problem(16, "d3-target", pretherapy=False)
    assert P.weights["k4"] == 60.0 and P.dose_times == D3_TIMES
    assert P.m == 3 * 256 + 1
    with pytest.raises(KeyError):
        build_pca_problem(16, "nope", pretherapy=False)
    with pytest.raises(ValueError):
        build_pca_problem(16, k1=-1.0, pretherapy=False)
    g = Grid.uniform(P.T, 6)
    st = g.stage_times(np.array([0, 1 / 3, 2 / 3, 1]))
    U = P.project(P.initial_guess(st)[..., None])
    sol = forward_sweep(P, "AP4o33vgi", g, U)
    obs = pca_observables(P, sol)
    assert obs["V_phi"].shape == (7,)
    assert obs["V_phi"][0] == pytest.approx(P.base.W @ P.y0[:256])
    total = obs["J1"] + obs["J2"] + obs["J3"] + obs["J4"]
    assert total == pytest.approx(sol.cost, rel=1e-8)


def test_hamiltonian_argmin_is_stationary():
    P = build_pca_problem(16, "d1-target", pretherapy=False)
    rng = np.random.default_rng(2)
    y = P.y0 + 0.01 * rng.standard_normal(P.m)
    p = rng.standard_normal(P.m)
    p[-1] = 1.0
    u = P.hamiltonian_argmin(1.0, y, p)
    H = lambda v: float(p @ P.f(1.0, y, np.array([v])))
    e = 1e-4
    assert (H(u[0] + e) - H(u[0] - e)) / (2 * e) == pytest.approx(0.0, abs=1e-6 * abs(H(u[0])) + 1e-8)
