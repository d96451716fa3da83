"""Reduced gradient, projected-gradient optimizer and minimum-principle controls."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .integrate import SolverOptions, adjoint_sweep, forward_sweep
from .triplets import build_triplet

__all__ = [
    "reduced_gradient",
    "objective_and_gradient",
    "optimize",
    "solve_quadratic",
    "postprocess_controls",
    "OptimizationReport",
    "write_trace",
    "scipy_hook",
    "quadrature_weights",
]

log = logging.getLogger(__name__)


def reduced_gradient(problem, triplet, grid, sol):
    """Exact gradient of ``C(y_T)`` w.r.t. the stage controls, ``h_n k_i J_u^T P_ni``."""
    T = build_triplet(triplet)
    if sol.P is None:
        raise ValueError("solution carries no adjoint blocks")
    st = grid.stage_times(T.c)
    G = np.zeros_like(sol.U)
    if problem.d == 0:
        return G
    for n in range(grid.steps):
        for i in range(T.s):
            Ju = problem.jac_u(st[n, i], sol.Y[n, i], sol.U[n, i])
            G[n, i] = grid.h[n] * T.kappa[i] * (Ju.T @ sol.P[n, i])
    return G


def objective_and_gradient(problem, triplet, grid, opts=None):
    """Closure ``U -> (C(U), grad C(U), solution)`` for external drivers."""
    def fun(U):
        sol = forward_sweep(problem, triplet, grid, U, opts)
        adjoint_sweep(problem, triplet, sol, opts)
        return sol.cost, reduced_gradient(problem, triplet, grid, sol), sol
    return fun


@dataclass
class OptimizationReport:
    U: np.ndarray
    solution: object
    iterations: int = 0
    converged: bool = False
    line_search_failed: bool = False
    objective: list = field(default_factory=list)
    gradient_norm: list = field(default_factory=list)
    step_length: list = field(default_factory=list)
    sweeps_total: list = field(default_factory=list)
    message: str = ""
    gradient_scale: float = 1.0

    def is_monotone(self, rtol=8 * np.finfo(float).eps):
        """Objective history non-increasing up to ``rtol * |C|`` round-off."""
        obj = np.asarray(self.objective, dtype=float)
        if obj.size < 2:
            return True
        return bool(np.all(np.diff(obj) <= rtol * np.abs(obj[:-1])))

    @property
    def monotone(self):
        return self.is_monotone()


def _stationarity(problem, U, G, scale=1.0):
    return float(np.max(np.abs(problem.project(U - G / scale) - U))) if U.size else 0.0


def optimize(problem, triplet, grid, U0, tol=1e-8, max_iters=500, opts=None, c1=1e-4,
             max_halvings=40, hook=None, callback=None, gradient_scale=None):
    """Projected gradient descent with Armijo backtracking.

    Trial steps come from the Barzilai-Borwein formula (the first one from
    the unit step), then are halved until
    ``C(U+) <= C(U) + c1 <g, U+ - U>`` with ``U+ = project(U - alpha g)``.
    Stops when ``||project(U - g/scale) - U||_inf <= tol``; ``scale`` is 1 by
    default, or ``max(1, ||g(U0)||_inf)`` with ``gradient_scale="initial"``
    (a relative first-order measure for objectives of large magnitude).

    ``hook(fun, U0, lower, upper)`` replaces the built-in loop; ``fun``
    maps a control array to ``(C, grad)`` and the hook returns the final
    controls.
    """
    opts = opts or SolverOptions()
    T = build_triplet(triplet)
    fg = objective_and_gradient(problem, T, grid, opts)
    U = problem.project(np.asarray(U0, dtype=float))
    rep = OptimizationReport(U=U, solution=None)

    evals = 0

    def evaluate(V):
        nonlocal evals
        evals += 2  # one forward and one adjoint sweep
        return fg(V)

    if hook is not None:
        def fun(V):
            C, G, _ = evaluate(problem.project(np.asarray(V, dtype=float).reshape(U.shape)))
            rep.objective.append(C)
            return C, G
        U = problem.project(np.asarray(hook(fun, U, problem.lower, problem.upper),
                                       dtype=float).reshape(U.shape))
        C, G, sol = evaluate(U)
        rep.U, rep.solution = U, sol
        rep.gradient_norm.append(_stationarity(problem, U, G))
        rep.converged = rep.gradient_norm[-1] <= tol
        rep.iterations = len(rep.objective)
        rep.message = "external optimizer"
        return rep

    def cost_only(V):
        nonlocal evals
        evals += 1
        sol = forward_sweep(problem, T, grid, V, opts)
        return sol.cost, sol

    def gradient(sol):
        nonlocal evals
        evals += 1
        adjoint_sweep(problem, T, sol, opts)
        return reduced_gradient(problem, T, grid, sol)

    C, G, sol = evaluate(U)
    if gradient_scale == "initial":
        gscale = max(1.0, float(np.max(np.abs(G)))) if G.size else 1.0
    elif gradient_scale is None:
        gscale = 1.0
    else:
        gscale = float(gradient_scale)
    rep.gradient_scale = gscale
    alpha, taken = 1.0, 0.0
    Uold = Gold = None
    while True:
        stat = _stationarity(problem, U, G, gscale)
        rep.objective.append(C)
        rep.step_length.append(taken)
        rep.gradient_norm.append(stat)
        rep.sweeps_total.append(evals)
        if callback is not None:
            callback(rep.iterations, U, C, stat)
        if stat <= tol:
            rep.converged = True
            rep.message = "stationarity tolerance reached"
            break
        if rep.iterations >= max_iters:
            rep.message = "iteration limit reached"
            break
        if Uold is not None:
            s = (U - Uold).ravel()
            y = (G - Gold).ravel()
            sy = s @ y
            if sy > 0:
                alpha = (s @ s) / sy
        for _ in range(max_halvings + 1):
            Un = problem.project(U - alpha * G)
            Cn, soln = cost_only(Un)
            if Cn <= C + c1 * np.sum(G * (Un - U)):
                break
            alpha *= 0.5
        else:
            rep.line_search_failed = True
            rep.message = f"line search failed after {max_halvings} halvings"
            log.warning(rep.message)
            break
        Uold, Gold = U, G
        U, C, sol = Un, Cn, soln
        G = gradient(sol)
        taken = alpha
        rep.iterations += 1
    rep.U, rep.solution = U, sol
    return rep


def solve_quadratic(problem, triplet, grid, U0, tol=1e-10, max_iters=200, opts=None,
                    weights=None, callback=None):
    """Preconditioned conjugate gradients for problems whose reduced cost is
    quadratic in ``U`` (linear dynamics in ``y`` and ``u``, quadratic costs,
    no active bounds).

    Hessian products come from gradient differences, which are exact for
    such problems.  Only gradients are compared, so stationarity far below
    the round-off level of the objective is reachable.  ``weights`` is the
    diagonal preconditioner (default: the quadrature weights ``h_n k_i``);
    the stopping test is ``||g / weights||_inf <= tol``, the gradient in
    the metric of the weights.
    """
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    if np.any(np.isfinite(problem.lower)) or np.any(np.isfinite(problem.upper)):
        raise ValueError("solve_quadratic needs an unconstrained control set")
    fg = objective_and_gradient(problem, T, grid, opts)
    D = quadrature_weights(T, grid, problem.d) if weights is None else np.broadcast_to(weights, np.shape(U0))
    U = np.asarray(U0, dtype=float).copy()
    rep = OptimizationReport(U=U, solution=None)
    C, G, sol = fg(U)
    evals = 2
    r = -G
    z = r / D
    p = z.copy()
    rz = np.sum(r * z)
    taken = 0.0
    while True:
        stat = float(np.max(np.abs(G / D)))
        rep.objective.append(C)
        rep.gradient_norm.append(stat)
        rep.step_length.append(taken)
        rep.sweeps_total.append(evals)
        if callback is not None:
            callback(rep.iterations, U, C, stat)
        if stat <= tol:
            rep.converged = True
            rep.message = "stationarity tolerance reached"
            break
        if rep.iterations >= max_iters:
            rep.message = "iteration limit reached"
            break
        # probe at a size comparable to U; exact for a quadratic cost
        eps = max(1.0, float(np.max(np.abs(U)))) / max(float(np.max(np.abs(p))), 1e-300)
        _, Gp, _ = fg(U + eps * p)
        Hp = (Gp - G) / eps
        pHp = np.sum(p * Hp)
        if not pHp > 0:
            rep.message = "non-positive curvature, reduced cost is not convex quadratic"
            break
        alpha = rz / pHp
        U = U + alpha * p
        C, G, sol = fg(U)
        evals += 4
        r = -G  # true residual, no recurrence drift
        z = r / D
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        taken = alpha
        rep.iterations += 1
    rep.U, rep.solution = U, sol
    return rep


def postprocess_controls(problem, sol):
    """Pointwise Hamiltonian minimizers ``U_ni = argmin_u H(Y_ni, u, P_ni)`` over the box."""
    if not problem.has_hamiltonian_argmin:
        raise NotImplementedError(f"{problem.name}: no closed-form Hamiltonian minimizer")
    if sol.P is None:
        raise ValueError("solution carries no adjoint blocks")
    st = sol.stage_times
    out = np.empty_like(sol.U)
    for n in range(out.shape[0]):
        for i in range(out.shape[1]):
            out[n, i] = problem.hamiltonian_argmin(st[n, i], sol.Y[n, i], sol.P[n, i])
    return problem.project(out)


def write_trace(report, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "objective", "gradient_norm", "step_length", "sweeps_total"])
        for k, (C, g) in enumerate(zip(report.objective, report.gradient_norm)):
            step = repr(float(report.step_length[k])) if k < len(report.step_length) else ""
            sweeps = report.sweeps_total[k] if k < len(report.sweeps_total) else ""
            wr.writerow([k, repr(float(C)), repr(float(g)), step, sweeps])


def scipy_hook(method="L-BFGS-B", weights=None, **kw):
    """External-optimizer hook running :func:`scipy.optimize.minimize`.

    ``weights`` (same shape as the controls, positive) switches to the
    variables ``x = sqrt(weights) * U``; with the quadrature weights
    ``h_n k_i`` this is the L2 metric of the control function.  The exact
    discrete gradient is still what the optimizer receives, only expressed
    in the new variables.
    """
    from scipy.optimize import Bounds, minimize

    def hook(fun, U0, lower, upper):
        shape = U0.shape
        w = np.ones(shape) if weights is None else np.broadcast_to(weights, shape)
        r = np.sqrt(w).ravel()
        lo = np.broadcast_to(lower, shape).ravel() * r
        hi = np.broadcast_to(upper, shape).ravel() * r

        def f(x):
            C, G = fun((x / r).reshape(shape))
            return C, G.ravel() / r

        res = minimize(f, U0.ravel() * r, jac=True, method=method, bounds=Bounds(lo, hi), **kw)
        return (res.x / r).reshape(shape)

    return hook


def quadrature_weights(triplet, grid, d=1):
    """``h_n k_i`` broadcast to the control layout ``(N+1, s, d)``."""
    T = build_triplet(triplet)
    w = np.outer(grid.h, T.kappa)[:, :, None]
    return np.repeat(w, d, axis=2)
