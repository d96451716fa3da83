"""Problem abstraction, time grids and the Lagrange-to-Mayer transformation."""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["ControlProblem", "Grid", "augment_lagrange", "grid_metrics"]


class ControlProblem:
    """Optimal control problem ``min C(y(T))`` s.t. ``y' = f(t, y, u)``, ``u`` in a box.

    Either subclass and override the methods or pass callables to the
    constructor.  ``jac_y`` and ``jac_u`` may return dense arrays or scipy
    sparse matrices; the solvers only use ``@``, ``.T`` and
    :meth:`shifted_solver`.

    Parameters
    ----------
    m, d : state and control dimensions.
    T : horizon.
    y0 : initial state.
    f, jac_y, jac_u : callables ``(t, y, u)``.
    objective, objective_grad : callables of the terminal state.
    lower, upper : box bounds for every control component (``-inf``/``inf``
        for no bound).
    hamiltonian_argmin : optional callable ``(t, y, p) -> u``.
    """

    def __init__(self, m, d, T, y0, f=None, jac_y=None, jac_u=None, objective=None,
                 objective_grad=None, lower=-np.inf, upper=np.inf,
                 hamiltonian_argmin=None, name="problem"):
        self.m = int(m)
        self.d = int(d)
        self.T = float(T)
        self.y0 = np.asarray(y0, dtype=float).copy()
        self.lower = np.broadcast_to(np.asarray(lower, dtype=float), (self.d,)).copy()
        self.upper = np.broadcast_to(np.asarray(upper, dtype=float), (self.d,)).copy()
        self.name = name
        if f is not None:
            self.f = f
        if jac_y is not None:
            self.jac_y = jac_y
        if jac_u is not None:
            self.jac_u = jac_u
        if objective is not None:
            self.objective = objective
        if objective_grad is not None:
            self.objective_grad = objective_grad
        self._argmin = hamiltonian_argmin
        if self.y0.shape != (self.m,):
            raise ValueError(f"y0 has shape {self.y0.shape}, expected ({self.m},)")
        if np.any(self.lower > self.upper):
            raise ValueError("control box has lower > upper")

    # dynamics ---------------------------------------------------------------
    def f(self, t, y, u):
        raise NotImplementedError

    def jac_y(self, t, y, u):
        raise NotImplementedError

    def jac_u(self, t, y, u):
        raise NotImplementedError

    def objective(self, yT):
        raise NotImplementedError

    def objective_grad(self, yT):
        raise NotImplementedError

    # controls -----------------------------------------------------------------
    def project(self, U):
        """Componentwise clamp onto the box (last axis is the control index)."""
        return np.clip(U, self.lower, self.upper)

    @property
    def has_hamiltonian_argmin(self):
        return self._argmin is not None or type(self).hamiltonian_argmin is not ControlProblem.hamiltonian_argmin

    def hamiltonian_argmin(self, t, y, p):
        if self._argmin is None:
            raise NotImplementedError(f"{self.name}: no closed-form Hamiltonian minimizer")
        return self._argmin(t, y, p)

    # linear algebra -------------------------------------------------------------
    def shifted_solver(self, alpha, gamma, t, y, u):
        """Factorize ``alpha*I - gamma*J`` with ``J = jac_y(t, y, u)``.

        Returns ``solve(b, trans=False)``; ``trans=True`` solves with the
        transposed matrix.
        """
        J = self.jac_y(t, y, u)
        if sp.issparse(J):
            M = (alpha * sp.identity(self.m, format="csc") - gamma * J).tocsc()
            lu = spla.splu(M)
            return lambda b, trans=False: lu.solve(np.asarray(b, dtype=float), trans="T" if trans else "N")
        M = alpha * np.eye(self.m) - gamma * np.asarray(J)
        lu = sla.lu_factor(M, check_finite=False)
        return lambda b, trans=False: sla.lu_solve(lu, b, trans=1 if trans else 0, check_finite=False)


class Grid:
    """Time grid ``0 = t_0 < ... < t_{N+1} = T`` with ``N + 1`` steps."""

    def __init__(self, t):
        t = np.asarray(t, dtype=float)
        if t.ndim != 1 or t.size < 3:
            raise ValueError("a grid needs at least two steps")
        h = np.diff(t)
        if not np.all(h > 0):
            raise ValueError("grid points must be strictly increasing")
        if t[0] != 0.0:
            raise ValueError("grid must start at t = 0")
        self.t = t
        self.t.setflags(write=False)

    @classmethod
    def uniform(cls, T, steps):
        return cls(np.linspace(0.0, T, int(steps) + 1))

    @property
    def T(self):
        return float(self.t[-1])

    @property
    def steps(self):
        """Number of steps ``N + 1``."""
        return self.t.size - 1

    @property
    def N(self):
        return self.t.size - 2

    @property
    def h(self):
        return np.diff(self.t)

    @property
    def sigma(self):
        """Ratios ``h_n / h_{n-1}``; entry 0 is set to 1."""
        h = self.h
        return np.concatenate([[1.0], h[1:] / h[:-1]])

    def stage_times(self, c):
        return self.t[:-1, None] + np.outer(self.h, c)

    def __len__(self):
        return self.t.size

    def __repr__(self):
        return f"Grid(steps={self.steps}, T={self.T:g})"


def grid_metrics(grid):
    """Ratios ``sigma_n`` and ``eta_n = (sigma_n - 1)/h_n`` for ``n >= 1``."""
    if not isinstance(grid, Grid):
        grid = Grid(grid)
    h = grid.h
    sigma = h[1:] / h[:-1]
    eta = (sigma - 1.0) / h[1:]
    return {
        "sigma": sigma,
        "eta": eta,
        "sigma_min": float(sigma.min()),
        "sigma_max": float(sigma.max()),
        "eta_max": float(np.max(np.abs(eta))),
    }


def _border(J, row):
    """``[[J, 0], [row, 0]]`` keeping the storage type of ``J``."""
    m = J.shape[0]
    if sp.issparse(J):
        return sp.bmat([[J, sp.csr_matrix((m, 1))],
                        [sp.csr_matrix(row.reshape(1, -1)), sp.csr_matrix((1, 1))]], format="csr")
    out = np.zeros((m + 1, m + 1))
    out[:m, :m] = J
    out[m, :m] = row
    return out


def augment_lagrange(problem, running_cost, grad_running_cost, name=None):
    """Mayer form of ``C(y(T)) + int_0^T l(t, y, u) dt``.

    ``running_cost(t, y, u)`` returns a scalar, ``grad_running_cost`` the
    pair ``(dl/dy, dl/du)``.  The returned problem carries the extra state
    ``y_{m+1}`` with ``y_{m+1}(0) = 0``.
    """
    m, d = problem.m, problem.d
    base = problem

    def f(t, y, u):
        x = y[:m]
        return np.concatenate([base.f(t, x, u), [running_cost(t, x, u)]])

    def jac_y(t, y, u):
        gy, _ = grad_running_cost(t, y[:m], u)
        return _border(base.jac_y(t, y[:m], u), np.asarray(gy, dtype=float))

    def jac_u(t, y, u):
        _, gu = grad_running_cost(t, y[:m], u)
        Ju = base.jac_u(t, y[:m], u)
        gu = np.asarray(gu, dtype=float).reshape(1, d)
        if sp.issparse(Ju):
            return sp.vstack([Ju, sp.csr_matrix(gu)], format="csr")
        return np.vstack([np.asarray(Ju).reshape(m, d), gu])

    def objective(yT):
        return base.objective(yT[:m]) + yT[m]

    def objective_grad(yT):
        return np.concatenate([base.objective_grad(yT[:m]), [1.0]])

    aug = ControlProblem(m + 1, d, base.T, np.concatenate([base.y0, [0.0]]), f=f,
                         jac_y=jac_y, jac_u=jac_u, objective=objective,
                         objective_grad=objective_grad, lower=base.lower, upper=base.upper,
                         name=name or f"{base.name}+lagrange")

    def shifted_solver(alpha, gamma, t, y, u):
        inner = base.shifted_solver(alpha, gamma, t, y[:m], u)
        gy = np.asarray(grad_running_cost(t, y[:m], u)[0], dtype=float)

        def solve(b, trans=False):
            b = np.asarray(b, dtype=float)
            if trans:
                x2 = b[m] / alpha
                x1 = inner(b[:m] + gamma * gy * x2, trans=True)
            else:
                x1 = inner(b[:m])
                x2 = (b[m] + gamma * gy @ x1) / alpha
            return np.concatenate([x1, [x2]])

        return solve

    aug.shifted_solver = shifted_solver
    aug.base = base
    return aug
