"""Forward and adjoint sweeps of a Peer triplet on a fixed grid.

Stage blocks are stored as arrays of shape ``(N+1, s, m)``: ``Y[n, i]`` is
the approximation at ``t_n + c_i h_n``.  The standard steps are solved
stage by stage with modified Newton; the two boundary blocks with full
coefficient matrices are solved by Gauss-Seidel sweeps with the lower
triangular surrogate (upper triangular, in reverse stage order, for the
adjoint).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .problem import Grid
from .triplets import build_triplet

__all__ = [
    "SolverOptions",
    "SolverError",
    "TrajectorySolution",
    "starting_step",
    "standard_forward_step",
    "end_forward_step",
    "forward_sweep",
    "adjoint_sweep",
    "solve_state_adjoint",
    "forward_residuals",
    "adjoint_residuals",
    "sweeps_to_tolerance",
    "dump_trajectory",
]


@dataclass
class SolverOptions:
    newton_tol: float = 1e-12
    newton_maxit: int = 25
    bnd_tol: float = 1e-13
    bnd_maxit: int = 30
    full_newton: bool = False  # refresh the Jacobian every Newton iteration
    # increments that stop decreasing below this level are taken as round-off
    stall_floor: float = 1e-10


class SolverError(RuntimeError):
    def __init__(self, msg, step=None, stage=None, residual=None):
        super().__init__(msg)
        self.step = step
        self.stage = stage
        self.residual = residual


@dataclass
class TrajectorySolution:
    grid: Grid
    triplet: str
    U: np.ndarray
    Y: np.ndarray
    yT: np.ndarray
    cost: float
    P: np.ndarray | None = None
    pT: np.ndarray | None = None
    p0: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def stage_times(self):
        return self.grid.stage_times(build_triplet(self.triplet).c)


def _wnorm(dx, x, scale=None):
    """Max of ``|dx| / (1 + |x|)``; ``scale`` raises the denominator per component
    (magnitudes over a stage block, so components crossing zero are not over-weighted)."""
    if not dx.size:
        return 0.0
    den = 1.0 + np.abs(x)
    if scale is not None:
        den = np.maximum(den, scale)
    return float(np.max(np.abs(dx) / den))


def _block_scale(X):
    return 1.0 + np.max(np.abs(X), axis=0)


def _stats():
    return {"newton_iterations": 0, "stage_solves": 0, "start_sweeps": [], "end_sweeps": [],
            "adjoint_start_sweeps": [], "adjoint_end_sweeps": []}


def _control_at(T, Ublock, theta):
    """Control polynomial of one slab evaluated at relative position ``theta``."""
    return T.interpolation_row(theta) @ Ublock


def _extrapolation_matrix(T, sigma):
    """Least-squares quadratic through the previous slab, read at ``1 + sigma c``."""
    V3 = np.vander(T.c, 3, increasing=True)
    Vt = np.vander(1.0 + sigma * T.c, 3, increasing=True)
    return Vt @ np.linalg.pinv(V3)


def _newton_stage(problem, alpha, gamma, t, u, rhs, x, opts, stats, n, i, scale=None):
    """Solve ``alpha x - gamma f(t, x, u) = rhs`` by modified Newton."""
    solve = problem.shifted_solver(alpha, gamma, t, x, u)
    prev, grow = np.inf, 0
    for it in range(1, opts.newton_maxit + 1):
        r = alpha * x - gamma * problem.f(t, x, u) - rhs
        dx = solve(r)
        x = x - dx
        err = _wnorm(dx, x, scale)
        stats["newton_iterations"] += 1
        if not np.isfinite(err):
            raise SolverError(f"Newton produced non-finite values at step {n}, stage {i + 1}",
                              n, i, err)
        if err <= opts.newton_tol or (err <= opts.stall_floor and err >= 0.5 * prev):
            return x
        grow = grow + 1 if err > prev else 0
        if grow >= 3:
            raise SolverError(f"Newton diverging at step {n}, stage {i + 1} (increment {err:.3e})",
                              n, i, err)
        prev = err
        if opts.full_newton:
            solve = problem.shifted_solver(alpha, gamma, t, x, u)
    raise SolverError(f"Newton not converged at step {n}, stage {i + 1} after "
                      f"{opts.newton_maxit} iterations (increment {err:.3e})", n, i, err)


def _boundary_forward(problem, T, Ab, At, h, times, Ublk, rhs, X, jac_point, opts, n):
    """Gauss-Seidel sweeps for ``Ab X - h K F(X) = rhs`` with surrogate ``At``.

    The Jacobian is frozen at ``jac_point = (t, y, u)`` during the sweeps;
    a final sweep with per-stage Jacobians polishes the result.
    Returns the block and the per-sweep increment history.
    """
    s = T.s
    kap = T.kappa
    tj, yj, uj = jac_point
    solvers = [problem.shifted_solver(At[i, i], h * kap[i], tj, yj, uj) for i in range(s)]
    X = X.copy()
    history = []

    def sweep(solvers):
        big = 0.0
        scale = _block_scale(X)
        for i in range(s):
            r = Ab[i] @ X - h * kap[i] * problem.f(times[i], X[i], Ublk[i]) - rhs[i]
            dx = solvers[i](r)
            X[i] -= dx
            big = max(big, _wnorm(dx, X[i], scale))
        return big

    prev = np.inf
    for _ in range(opts.bnd_maxit):
        err = sweep(solvers)
        history.append(err)
        if not np.isfinite(err):
            break
        if err <= opts.bnd_tol or (err <= opts.stall_floor and err >= 0.5 * prev):
            break
        prev = err
    else:
        raise SolverError(f"boundary iteration at step {n} not converged after {opts.bnd_maxit} "
                          f"sweeps (increment {history[-1]:.3e})", n, None, history[-1])
    if not np.isfinite(history[-1]):
        raise SolverError(f"boundary iteration at step {n} produced non-finite values", n)
    polish = [problem.shifted_solver(At[i, i], h * kap[i], times[i], X[i], Ublk[i]) for i in range(s)]
    history.append(sweep(polish))
    return X, history


def starting_step(problem, triplet, grid, U0, opts=None, stats=None):
    """Stage block ``Y_0`` of ``A_0 Y_0 = a (x) y_0 + h_0 K F(Y_0, U_0)``."""
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    stats = stats if stats is not None else _stats()
    h = grid.h[0]
    times = grid.t[0] + T.c * h
    y0 = problem.y0
    rhs = np.outer(T.a, y0)
    X = np.tile(y0, (T.s, 1))
    jac_point = (grid.t[0], y0, _control_at(T, U0, 0.0))
    Y0, hist = _boundary_forward(problem, T, T.A0, T.At0, h, times, U0, rhs, X, jac_point, opts, 0)
    stats["start_sweeps"] = hist
    return Y0


def standard_forward_step(problem, triplet, grid, n, Yprev, Un, opts=None, stats=None, guess=None):
    """Stage block ``Y_n`` of ``A Y_n = B(sigma_n) Y_{n-1} + h_n K F(Y_n, U_n)``."""
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    stats = stats if stats is not None else _stats()
    h = grid.h[n]
    sig = grid.sigma[n]
    times = grid.t[n] + T.c * h
    rhs = T.B(sig) @ Yprev
    if guess is None:
        guess = _extrapolation_matrix(T, sig) @ Yprev if n > 1 else \
            np.tile(T.interpolation_row(1.0) @ Yprev, (T.s, 1))
    Y = np.empty_like(Yprev)
    scale = _block_scale(Yprev)
    A = T.A
    for i in range(T.s):
        ri = rhs[i] - A[i, :i] @ Y[:i]
        Y[i] = _newton_stage(problem, A[i, i], h * T.kappa[i], times[i], Un[i], ri, guess[i],
                             opts, stats, n, i, scale)
        stats["stage_solves"] += 1
    return Y


def end_forward_step(problem, triplet, grid, Yprev, UN, opts=None, stats=None):
    """Stage block ``Y_N`` of the end method and the terminal value ``(w^T (x) I) Y_N``."""
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    stats = stats if stats is not None else _stats()
    n = grid.N
    h = grid.h[n]
    sig = grid.sigma[n]
    times = grid.t[n] + T.c * h
    rhs = T.B(sig) @ Yprev
    X = _extrapolation_matrix(T, sig) @ Yprev if n > 1 else \
        np.tile(T.interpolation_row(1.0) @ Yprev, (T.s, 1))
    jac_point = (grid.t[n], T.interpolation_row(1.0) @ Yprev, _control_at(T, UN, 0.0))
    YN, hist = _boundary_forward(problem, T, T.AN, T.AtN, h, times, UN, rhs, X, jac_point, opts, n)
    stats["end_sweeps"] = hist
    return YN, T.w @ YN


def _check_controls(problem, T, grid, U):
    U = np.asarray(U, dtype=float)
    shape = (grid.steps, T.s, problem.d)
    if U.shape != shape:
        if problem.d == 0 and U.size == 0:
            return np.zeros(shape)
        raise ValueError(f"controls have shape {U.shape}, expected {shape}")
    return U


def forward_sweep(problem, triplet, grid, U, opts=None):
    """State stage blocks, terminal value and cost for the controls ``U``."""
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    U = _check_controls(problem, T, grid, U)
    stats = _stats()
    Y = np.empty((grid.steps, T.s, problem.m))
    Y[0] = starting_step(problem, T, grid, U[0], opts, stats)
    for n in range(1, grid.N):
        Y[n] = standard_forward_step(problem, T, grid, n, Y[n - 1], U[n], opts, stats)
    Y[grid.N], yT = end_forward_step(problem, T, grid, Y[grid.N - 1], U[grid.N], opts, stats)
    return TrajectorySolution(grid=grid, triplet=T.name, U=U, Y=Y, yT=yT,
                              cost=float(problem.objective(yT)), stats=stats)


def _boundary_adjoint(problem, T, Ab, At, h, times, Yblk, Ublk, rhs, P, opts, n):
    """Reverse Gauss-Seidel sweeps for ``Ab^T P - h K J^T P = rhs``."""
    s = T.s
    kap = T.kappa
    Jt = [problem.jac_y(times[i], Yblk[i], Ublk[i]).T for i in range(s)]
    solvers = [problem.shifted_solver(At[i, i], h * kap[i], times[i], Yblk[i], Ublk[i])
               for i in range(s)]
    P = P.copy()
    history = []
    prev = np.inf
    for _ in range(opts.bnd_maxit):
        big = 0.0
        scale = _block_scale(P)
        for i in reversed(range(s)):
            r = Ab[:, i] @ P - h * kap[i] * (Jt[i] @ P[i]) - rhs[i]
            dp = solvers[i](r, trans=True)
            P[i] -= dp
            big = max(big, _wnorm(dp, P[i], scale))
        history.append(big)
        if not np.isfinite(big):
            raise SolverError(f"adjoint boundary iteration at step {n} produced non-finite values", n)
        if big <= opts.bnd_tol or (big <= opts.stall_floor and big >= 0.5 * prev):
            return P, history
        prev = big
    raise SolverError(f"adjoint boundary iteration at step {n} not converged after "
                      f"{opts.bnd_maxit} sweeps (increment {history[-1]:.3e})", n, None, history[-1])


def adjoint_sweep(problem, triplet, sol, opts=None):
    """Backward sweep filling ``P``, ``pT`` and ``p0`` of ``sol`` (in place, also returned)."""
    T = build_triplet(triplet)
    opts = opts or SolverOptions()
    grid, Y, U = sol.grid, sol.Y, sol.U
    N = grid.N
    h, sig = grid.h, grid.sigma
    st = grid.stage_times(T.c)
    s, kap = T.s, T.kappa
    P = np.empty_like(Y)
    pT = np.asarray(problem.objective_grad(sol.yT), dtype=float)

    P[N], hist = _boundary_adjoint(problem, T, T.AN, T.AtN, h[N], st[N], Y[N], U[N],
                                   np.outer(T.w, pT), np.tile(pT, (s, 1)), opts, N)
    sol.stats["adjoint_end_sweeps"] = hist
    A = T.A
    for n in range(N - 1, 0, -1):
        rhs = T.B(sig[n + 1]).T @ P[n + 1]
        for i in reversed(range(s)):
            solve = problem.shifted_solver(A[i, i], h[n] * kap[i], st[n, i], Y[n, i], U[n, i])
            P[n, i] = solve(rhs[i] - A[i + 1:, i] @ P[n, i + 1:], trans=True)
    rhs = T.B(sig[1]).T @ P[1]
    P[0], hist = _boundary_adjoint(problem, T, T.A0, T.At0, h[0], st[0], Y[0], U[0], rhs,
                                   P[1].copy(), opts, 0)
    sol.stats["adjoint_start_sweeps"] = hist
    sol.P = P
    sol.pT = pT
    sol.p0 = T.interpolation_row(0.0) @ P[0]
    return sol


def solve_state_adjoint(problem, triplet, grid, U, opts=None):
    sol = forward_sweep(problem, triplet, grid, U, opts)
    return adjoint_sweep(problem, triplet, sol, opts)


def forward_residuals(problem, sol):
    """Per-step max-norm residuals of the discrete state equations, scaled by ``1 + |Y|``."""
    T = build_triplet(sol.triplet)
    grid, Y, U = sol.grid, sol.Y, sol.U
    st = grid.stage_times(T.c)
    out = np.empty(grid.steps)
    for n in range(grid.steps):
        F = np.array([problem.f(st[n, i], Y[n, i], U[n, i]) for i in range(T.s)])
        hKF = grid.h[n] * T.kappa[:, None] * F
        if n == 0:
            r = T.A0 @ Y[0] - np.outer(T.a, problem.y0) - hKF
        else:
            An = T.AN if n == grid.N else T.A
            r = An @ Y[n] - T.B(grid.sigma[n]) @ Y[n - 1] - hKF
        out[n] = np.max(np.abs(r)) / (1.0 + np.max(np.abs(Y[n])))
    return out


def adjoint_residuals(problem, sol):
    """Per-step max-norm residuals of the discrete adjoint equations, scaled by ``1 + |P|``."""
    T = build_triplet(sol.triplet)
    grid, Y, U, P = sol.grid, sol.Y, sol.U, sol.P
    st = grid.stage_times(T.c)
    N = grid.N
    out = np.empty(grid.steps)
    for n in range(grid.steps):
        JtP = np.array([problem.jac_y(st[n, i], Y[n, i], U[n, i]).T @ P[n, i] for i in range(T.s)])
        hKJP = grid.h[n] * T.kappa[:, None] * JtP
        An = T.A0 if n == 0 else (T.AN if n == N else T.A)
        rhs = np.outer(T.w, sol.pT) if n == N else T.B(grid.sigma[n + 1]).T @ P[n + 1]
        r = An.T @ P[n] - hKJP - rhs
        out[n] = np.max(np.abs(r)) / (1.0 + np.max(np.abs(P[n])))
    return out


def sweeps_to_tolerance(history, tol):
    """Index (1-based) of the first sweep whose increment is at most ``tol``."""
    for k, e in enumerate(history, 1):
        if e <= tol:
            return k
    return None


def dump_trajectory(sol, path, limit=None, which="Y"):
    """Write stage values as CSV ``t_stage, stage_index, x1, x2, ...``.

    ``limit`` caps the number of state components written.
    """
    T = build_triplet(sol.triplet)
    data = sol.Y if which == "Y" else sol.P
    if data is None:
        raise ValueError(f"solution has no {which} blocks")
    m = data.shape[-1] if limit is None else min(int(limit), data.shape[-1])
    st = sol.stage_times
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t_stage", "stage_index"] + [f"{which.lower()}{k + 1}" for k in range(m)])
        for n in range(data.shape[0]):
            for i in range(T.s):
                wr.writerow([repr(float(st[n, i])), i + 1] + [repr(float(v)) for v in data[n, i, :m]])
