"""Solve / estimate / adapt pipelines shared by the command line and the demos."""

from __future__ import annotations

import logging
import time

import numpy as np

from .integrate import SolverOptions
from .mesh import equidistribute, estimate_errors, weighted_density, align_points
from .optimize import optimize, scipy_hook, solve_quadratic, quadrature_weights
from .problem import Grid
from .triplets import build_triplet

__all__ = [
    "initial_controls",
    "run_optimizer",
    "adapt_grid",
    "heat_errors",
    "fitted_order",
    "pairwise_orders",
    "heat_convergence",
]

log = logging.getLogger(__name__)


def initial_controls(problem, triplet, grid):
    """Zero controls, or the problem's preferred initial guess if it has one."""
    T = build_triplet(triplet)
    guess = getattr(problem, "initial_guess", None)
    if guess is None:
        return np.zeros((grid.steps, T.s, problem.d))
    st = grid.stage_times(T.c)
    return problem.project(np.asarray(guess(st), dtype=float).reshape(grid.steps, T.s, problem.d))


def _is_quadratic(problem):
    return getattr(problem, "name", "") == "heat1d"


def run_optimizer(problem, triplet, grid, U0=None, tol=1e-8, max_iters=500, method="auto",
                  opts=None, callback=None):
    """Optimal controls on ``grid``.

    ``auto`` picks conjugate gradients for the unconstrained heat problem
    (its reduced cost is quadratic) and projected gradients otherwise.
    """
    U0 = initial_controls(problem, triplet, grid) if U0 is None else U0
    if method == "auto":
        method = "cg" if _is_quadratic(problem) else "projected-gradient"
    if method == "cg":
        return solve_quadratic(problem, triplet, grid, U0, tol=tol, max_iters=max_iters, opts=opts,
                               callback=callback)
    scale = None if _is_quadratic(problem) else "initial"
    if method == "l-bfgs-b":
        hook = scipy_hook(weights=quadrature_weights(triplet, grid, problem.d),
                          options={"maxiter": max_iters})
        return optimize(problem, triplet, grid, U0, tol=tol, opts=opts, hook=hook)
    return optimize(problem, triplet, grid, U0, tol=tol, max_iters=max_iters, opts=opts,
                    callback=callback, gradient_scale=scale)


def adapt_grid(problem, triplet, sol, steps=None, atol_Y=1e-8, atol_P=1e-8, rtol_Y=1.0,
               rtol_P=1.0, delta=0.0, eta_max=15.0, points=()):
    """Estimate errors of ``sol`` and equi-distribute them on a new grid.

    ``points`` (e.g. dose times) are moved onto grid nodes afterwards when
    the ratio bounds allow.  Returns ``(grid, density, report)``.
    """
    T = build_triplet(triplet)
    grid = sol.grid
    steps = grid.steps if steps is None else steps
    est = estimate_errors(T, grid, sol.Y, sol.P, delta)
    dens = weighted_density(est, T, grid, atol_Y, atol_P, rtol_Y, rtol_P)
    rep = equidistribute(dens, steps, sigma_range=T.sigma_range, eta_max=eta_max, return_report=True)
    new = rep.grid
    if points:
        new, done = align_points(new, points, T.sigma_range, eta_max)
        rep.aligned = done
    return new, dens, rep


def heat_errors(problem, triplet, sol, U):
    """Max-norm errors of controls, final state and initial adjoint against the exact optimum."""
    T = build_triplet(triplet)
    ex = problem.exact
    m = ex.m
    st = sol.grid.stage_times(T.c)
    return {
        "u": float(np.max(np.abs(U[..., 0] - ex.u(st)))),
        "yT": float(np.max(np.abs(sol.yT[:m] - ex.y_T()))),
        "p0": float(np.max(np.abs(sol.p0[:m] - ex.p(0.0)))),
    }


def pairwise_orders(steps, errs):
    """``log2`` ratios of consecutive errors scaled by the step-count ratio."""
    steps = np.asarray(steps, dtype=float)
    errs = np.asarray(errs, dtype=float)
    return np.log(errs[:-1] / errs[1:]) / np.log(steps[1:] / steps[:-1])


def fitted_order(steps, errs):
    """Least-squares slope of ``-log err`` against ``log(N+1)``."""
    x = np.log(np.asarray(steps, dtype=float))
    y = -np.log(np.asarray(errs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def heat_convergence(problem, triplet, steps_list, adapt=False, tol=1e-9, adapt_opts=None,
                     opts=None):
    """Uniform (and optionally adapted) solves over ``steps_list``; one row per entry."""
    rows = []
    for steps in steps_list:
        t0 = time.perf_counter()
        g = Grid.uniform(problem.T, steps)
        rep = run_optimizer(problem, triplet, g, tol=tol, opts=opts)
        row = {"steps": steps, "grid": "uniform", **heat_errors(problem, triplet, rep.solution, rep.U),
               "iterations": rep.iterations, "converged": rep.converged}
        row["seconds"] = time.perf_counter() - t0
        rows.append(row)
        if adapt:
            t0 = time.perf_counter()
            new, dens, erep = adapt_grid(problem, triplet, rep.solution, steps, **(adapt_opts or {}))
            rep2 = run_optimizer(problem, triplet, new, tol=tol, opts=opts)
            row2 = {"steps": steps, "grid": "adapt",
                    **heat_errors(problem, triplet, rep2.solution, rep2.U),
                    "iterations": rep2.iterations, "converged": rep2.converged,
                    "sigma_min": erep.metrics["sigma_min"], "sigma_max": erep.metrics["sigma_max"],
                    "eta_max": erep.metrics["eta_max"], "violations": "; ".join(erep.violations)}
            row2["seconds"] = time.perf_counter() - t0
            row2["grid_obj"], row2["density"] = new, dens
            rows.append(row2)
    return rows


def default_options():
    return SolverOptions()
