"""Boundary control of a semi-discrete 1D heat equation with known optimum.

States ``y_i(t)`` live at the cell centres ``x_i = (i - 1/2)/m``; the
control enters as Dirichlet data at ``x = 1``.  The optimum is built from
the two slowest eigenmodes, so the exact discrete-in-space solution is
available in closed form.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..problem import ControlProblem, augment_lagrange

__all__ = ["Heat1D", "HeatExact", "heat_exact", "build_heat_problem", "phi1"]


def phi1(z):
    """``(e^z - 1)/z`` with the removable singularity filled in."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    zz = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0, np.expm1(zz) / zz)


class HeatExact:
    """Eigen-apparatus and closed-form optimum for ``m`` grid points."""

    def __init__(self, m=250, delta=1.0 / 75.0, T=1.0):
        self.m = m
        self.delta = delta
        self.T = T
        self.gamma = 2.0 * m**2
        k = np.arange(1, m + 1)
        self.omega = (k - 0.5) * np.pi
        self.lam = -4.0 * m**2 * np.sin(self.omega / (2 * m)) ** 2
        self.nu = 2.0 / np.sqrt(2 * m + np.sin(2 * self.omega) / np.sin(self.omega / m))
        i = np.arange(1, m + 1)
        # column k holds v^[k]
        self.V = self.nu[None, :] * np.cos(np.outer(2 * i - 1, self.omega) / (2 * m))

    def v(self, k):
        return self.V[:, k - 1]

    def eta_T(self, y0=None):
        y0 = np.ones(self.m) if y0 is None else y0
        lam, T, g, d = self.lam, self.T, self.gamma, self.delta
        vm = self.V[-1]
        eta0 = self.V.T @ y0
        s = sum(vm[l] * phi1((lam + lam[l]) * T) for l in (0, 1))
        return np.exp(lam * T) * eta0 - g**2 * d * T * vm * s

    def y_T(self):
        return self.V @ self.eta_T()

    def target(self):
        return self.y_T() - self.delta * (self.v(1) + self.v(2))

    def p(self, t):
        """Exact adjoint, shape ``t.shape + (m,)``."""
        t = np.asarray(t, dtype=float)
        e1 = np.exp(self.lam[0] * (self.T - t))[..., None]
        e2 = np.exp(self.lam[1] * (self.T - t))[..., None]
        return self.delta * (e1 * self.v(1) + e2 * self.v(2))

    def u(self, t):
        return -self.gamma * self.p(t)[..., -1]


def heat_exact(t, m=250):
    """``(y*(T), u*(t), p*(t))`` for the default data."""
    ex = HeatExact(m)
    return ex.y_T(), ex.u(t), ex.p(t)


class Heat1D(ControlProblem):
    """``y' = A y + gamma e_m u`` with ``0.5 ||y(T) - yhat||^2`` terminal cost.

    The running cost ``u^2/2`` is added by :func:`build_heat_problem`.
    """

    def __init__(self, m=250, delta=1.0 / 75.0, T=1.0):
        if m < 4:
            raise ValueError("heat problem needs m >= 4")
        self.exact = HeatExact(m, delta, T)
        self.dx = 1.0 / m
        self.gamma = self.exact.gamma
        diag = -2.0 * np.ones(m)
        diag[0], diag[-1] = -1.0, -3.0
        off = np.ones(m - 1)
        s = 1.0 / self.dx**2
        self.A = sp.diags([off * s, diag * s, off * s], [-1, 0, 1], format="csr")
        self._diag, self._off = diag * s, off * s
        self.yhat = self.exact.target()
        super().__init__(m, 1, T, np.ones(m), name="heat1d")
        self._Bu = np.zeros((m, 1))
        self._Bu[-1, 0] = self.gamma

    def f(self, t, y, u):
        out = self.A @ y
        out[-1] += self.gamma * u[0]
        return out

    def jac_y(self, t, y, u):
        return self.A

    def jac_u(self, t, y, u):
        return self._Bu

    def objective(self, yT):
        r = yT - self.yhat
        return 0.5 * float(r @ r)

    def objective_grad(self, yT):
        return yT - self.yhat

    def shifted_solver(self, alpha, gamma, t, y, u):
        # A is symmetric, so the transposed solve is the same banded solve
        m = self.m
        ab = np.zeros((3, m))
        ab[0, 1:] = -gamma * self._off
        ab[1] = alpha - gamma * self._diag
        ab[2, :-1] = -gamma * self._off
        return lambda b, trans=False: sla.solve_banded((1, 1), ab, b, check_finite=False)


def build_heat_problem(m=250, delta=1.0 / 75.0, T=1.0):
    """Mayer form with the extra state ``y_{m+1}' = u^2/2``."""
    base = Heat1D(m, delta, T)
    prob = augment_lagrange(
        base,
        lambda t, y, u: 0.5 * float(u @ u),
        lambda t, y, u: (np.zeros(m), np.asarray(u, dtype=float)),
        name="heat1d",
    )
    gam = base.gamma

    def argmin(t, y, p):
        return np.array([-gam * p[m - 1] / p[m]])

    prob._argmin = argmin
    prob.exact = base.exact
    return prob
