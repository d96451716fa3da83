"""A-posteriori error estimates, mesh density and equi-distributed grids."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .analysis import error_constants
from .problem import Grid, grid_metrics
from .triplets import build_triplet, pascal, vandermonde

__all__ = [
    "difference_vectors",
    "ErrorEstimate",
    "MeshDensity",
    "estimate_errors",
    "weighted_density",
    "equidistribute",
    "align_points",
    "eta_consistency_check",
    "slab_integrals",
    "EquidistributionResult",
    "dump_density",
    "dump_grid",
]

log = logging.getLogger(__name__)


def difference_vectors(c):
    """Third-difference weights ``(v1, v2)`` of a four-node stage block.

    ``v1 @ Y`` is ``h^3 y'''`` for stage values of a cubic on the slab;
    ``v2`` extracts the same leading coefficient after the Pascal shift to
    the next slab, which leaves it unchanged.
    """
    c = np.asarray(c, dtype=float)
    if np.unique(c).size != c.size:
        raise ValueError("difference vectors need distinct nodes")
    s = c.size
    Vi = np.linalg.inv(vandermonde(c, s))
    e = np.eye(s)[-1]
    v1 = 6.0 * e @ Vi
    v2 = 6.0 * e @ np.linalg.solve(pascal(s), Vi)
    return v1, v2


@dataclass
class ErrorEstimate:
    eps_Y: np.ndarray          # (N+1, m)
    eps_P: np.ndarray          # (N+1, m)
    delta: float
    Yhat: np.ndarray | None = None
    Phat: np.ndarray | None = None


@dataclass
class MeshDensity:
    """Slab density ``psi[n]`` on ``[t_n, t_{n+1})`` of ``grid``.

    Called as a function it is the continuous piecewise linear interpolant
    through the cell midpoints, held constant next to both ends.
    """

    grid: Grid
    psi: np.ndarray
    theta_Y: np.ndarray | None = None
    theta_P: np.ndarray | None = None
    omega: float = 1.0
    flags: list = field(default_factory=list)

    def nodes(self):
        t = self.grid.t
        tt = np.concatenate([[t[0]], (t[:-1] + t[1:]) / 2, [t[-1]]])
        vv = np.concatenate([[self.psi[0]], self.psi, [self.psi[-1]]])
        return tt, vv

    def __call__(self, t):
        tt, vv = self.nodes()
        return np.interp(t, tt, vv)


def estimate_errors(triplet, grid, Y, P, delta=0.0):
    """Third-derivative estimates blended from neighbouring slabs."""
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    T = build_triplet(triplet)
    v1, v2 = difference_vectors(T.c)
    s = T.s
    sig = grid.sigma
    N = grid.N
    d1Y = np.einsum("i,nim->nm", v1, Y)
    d2Y = np.einsum("i,nim->nm", v2, Y)
    d1P = np.einsum("i,nim->nm", v1, P)
    d2P = np.einsum("i,nim->nm", v2, P)
    eY = np.empty_like(d1Y)
    eP = np.empty_like(d1P)
    eY[0] = d1Y[0]
    for n in range(1, N + 1):
        eY[n] = delta * d1Y[n] + (1 - delta) * sig[n] ** (s - 1) * d2Y[n - 1]
    eP[N] = d1P[N]
    for n in range(N, 0, -1):
        eP[n - 1] = (1 - delta) * d1P[n] + delta * sig[n] ** (s - 1) * d2P[n - 1]

    l0 = T.interpolation_row(0.0)
    Yt = np.abs(np.einsum("i,nim->nm", l0, Y))
    Pt = np.abs(np.einsum("i,nim->nm", l0, P))
    Yhat = np.empty_like(Yt)
    Phat = np.empty_like(Pt)
    Yhat[0] = Yt[0]
    Yhat[1:] = delta * Yt[1:] + (1 - delta) * Yt[:-1]
    Phat[N] = Pt[N]
    Phat[:-1] = delta * Pt[:-1] + (1 - delta) * Pt[1:]
    return ErrorEstimate(eY, eP, delta, Yhat, Phat)


def weighted_density(estimate, triplet, grid, atol_Y=1e-8, atol_P=1e-8, rtol_Y=1.0, rtol_P=1.0,
                     floor=1e-12):
    """Balanced density ``psi_n = ||(theta^Y_n, omega theta^P_n) / h_n^3||_2^{1/3}``.

    ``omega`` is one global factor (ratio of the max norms of ``theta^Y``
    and ``theta^P`` over all slabs).
    """
    if min(atol_Y, atol_P) <= 0 or min(rtol_Y, rtol_P) < 0:
        raise ValueError("tolerances must be positive")
    T = build_triplet(triplet)
    ec = error_constants(T)
    N = grid.N
    cY = np.full(N + 1, ec["err3"])
    cP = np.full(N + 1, ec["err3_adj"])
    cY[0], cY[N] = ec["err3_0"], ec["err3_N"]
    cP[0], cP[N] = ec["err3_0_adj"], ec["err3_N_adj"]
    thY = cY * np.max(np.abs(estimate.eps_Y) / (atol_Y + rtol_Y * estimate.Yhat), axis=1)
    thP = cP * np.max(np.abs(estimate.eps_P) / (atol_P + rtol_P * estimate.Phat), axis=1)
    flags = []
    mY, mP = thY.max(), thP.max()
    if mP <= 1e-14 * max(mY, 1e-300):
        omega = 0.0
        flags.append("adjoint estimate vanishes, density from state only")
    else:
        omega = mY / mP
    h = grid.h
    psi = np.sqrt(thY**2 + (omega * thP) ** 2) ** (1 / 3) / h
    if not np.any(psi > 0):
        psi = np.ones_like(psi)
        flags.append("all estimates vanish, uniform density")
    else:
        psi = np.maximum(psi, floor * psi.max())
    log.info("mesh density: omega=%.3e", omega)
    return MeshDensity(grid, psi, thY, thP, omega, flags)


def _invert_cumulative(t, cum, targets):
    """Points where the piecewise linear ``cum`` over ``t`` hits ``targets``."""
    return np.interp(targets, cum, t)


def _gl_cumulative(psi, x, order=8):
    """Cumulative Gauss-Legendre integrals of a callable over the cells of ``x``."""
    z, w = np.polynomial.legendre.leggauss(order)
    a, b = x[:-1], x[1:]
    mid, rad = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + rad[:, None] * z[None, :]
    cell = rad * (np.asarray(psi(pts.ravel())).reshape(pts.shape) @ w)
    return np.concatenate([[0.0], np.cumsum(cell)])


def _de_boor(psi, T, steps, tol, max_passes, x=None):
    """Fixed point of: integrate ``psi`` on the mesh, invert the cumulative."""
    x = np.linspace(0.0, T, steps + 1) if x is None else x
    for k in range(max_passes):
        cum = _gl_cumulative(psi, x)
        xn = _invert_cumulative(x, cum, np.linspace(0.0, cum[-1], steps + 1))
        xn[0], xn[-1] = 0.0, T
        change = np.max(np.abs(xn - x)) / T
        x = xn
        if change <= tol:
            return x, k + 1, True
    return x, max_passes, False


def _smooth(v, passes=3):
    v = v.copy()
    for _ in range(passes):
        p = np.concatenate([[v[0]], v, [v[-1]]])
        v = 0.25 * p[:-2] + 0.5 * p[1:-1] + 0.25 * p[2:]
    return v


def _violations(t, sigma_range, eta_max):
    gm = grid_metrics(Grid(t))
    out = []
    lo, hi = sigma_range
    if gm["sigma_min"] < lo:
        out.append(f"min sigma {gm['sigma_min']:.3f} < {lo}")
    if gm["sigma_max"] > hi:
        out.append(f"max sigma {gm['sigma_max']:.3f} > {hi}")
    if eta_max is not None and gm["eta_max"] > eta_max:
        out.append(f"max |eta| {gm['eta_max']:.3f} > {eta_max}")
    return out


@dataclass
class EquidistributionResult:
    grid: Grid
    passes: int
    smoothing_rounds: int
    violations: list
    metrics: dict
    quality: float          # max relative deviation of the slab integrals of psi
    converged: bool = True
    residual: float = 0.0   # same, for the (possibly smoothed) density actually used
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def equidistribute(psi, steps, sigma_range=(0.0, np.inf), eta_max=15.0, T=None, tol=1e-10,
                   max_passes=30, max_smoothing=200, return_report=False):
    """New grid with ``steps`` cells carrying equal integrals of ``psi``.

    ``psi`` is a :class:`MeshDensity` or a positive callable on ``[0, T]``.
    A slab density is turned into the continuous piecewise linear function
    through its cell midpoints (constant next to the ends).  The mesh
    function solving ``(psi(x) x_xi)_xi = 0`` is found by de Boor's fixed
    point iteration.  While the ratio or ``eta`` bounds are violated,
    ``ln psi`` is smoothed by three passes of ``(1/4, 1/2, 1/4)`` over its
    nodes and the grid recomputed; after ``max_smoothing`` rounds the
    closest grid is returned with a violation report.
    """
    if steps < 4:
        raise ValueError("need at least 4 steps")
    if isinstance(psi, MeshDensity):
        if np.any(psi.psi <= 0):
            raise ValueError("density must be positive")
        T = psi.grid.T
        tt, vv = psi.nodes()
        fn = psi
    else:
        if T is None:
            raise ValueError("a callable density needs the horizon T")
        T = float(T)
        fn, tt, vv = psi, None, None
    orig = fn
    x, passes, ok = _de_boor(fn, T, steps, tol, max_passes)
    viol = _violations(x, sigma_range, eta_max)
    rounds = 0
    if viol and tt is None:
        # callables are sampled so they can be smoothed like slab densities
        tt = np.linspace(0.0, T, 8 * steps + 1)
        vv = np.asarray(fn(tt), dtype=float)
    while viol and rounds < max_smoothing:
        rounds += 1
        vv = np.exp(_smooth(np.log(vv), 3))
        fn = lambda t, vv=vv: np.interp(t, tt, vv)  # noqa: E731
        x, passes, ok = _de_boor(fn, T, steps, tol, max_passes, x)
        viol = _violations(x, sigma_range, eta_max)
    if not ok:
        log.warning("de Boor iteration stopped after %d passes", passes)
    grid = Grid(x)
    I = np.diff(_gl_cumulative(orig, x))
    quality = float(np.max(np.abs(I / I.mean() - 1.0)))
    Is = np.diff(_gl_cumulative(fn, x))
    residual = float(np.max(np.abs(Is / Is.mean() - 1.0)))
    flags = []
    limit = 0.25 if rounds else 0.10
    if quality > limit:
        flags.append(f"slab integrals deviate by {quality:.0%} from their mean"
                     + (" after smoothing" if rounds else ""))
    if viol:
        log.warning("equidistributed grid violates constraints: %s", "; ".join(viol))
    if return_report:
        return EquidistributionResult(grid, passes, rounds, viol, grid_metrics(grid), quality, ok, flags,
                                      residual)
    return grid


def slab_integrals(psi, grid):
    """Integral of the density ``psi`` over every cell of ``grid``."""
    return np.diff(_gl_cumulative(psi, grid.t))


def align_points(grid, points, sigma_range=(0.0, np.inf), eta_max=None):
    """Put grid nodes onto ``points`` (e.g. switching times) where the bounds allow.

    The node index is treated as a continuous coordinate: each point gets
    the nearest interior index, and a piecewise linear remap of the index
    axis carries it there, so the shift is spread over all nodes between
    two aligned points.  If the remapped grid violates the ratio or ``eta``
    bounds, only the single nearest node is moved instead.  Returns the
    grid and the list of aligned points.
    """
    t = np.array(grid.t)
    n = t.size - 1
    idx = np.arange(n + 1, dtype=float)
    pts = sorted(float(p) for p in points if t[0] < p < t[-1])
    fixed = {0: 0.0, n: float(n)}
    for p in pts:
        xi = float(np.interp(p, t, idx))
        k = int(round(xi))
        if 0 < k < n and k not in fixed:
            fixed[k] = xi
    ks = sorted(fixed)
    g = np.interp(idx, ks, [fixed[k] for k in ks])
    trial = np.interp(g, idx, t)
    for k in ks[1:-1]:
        trial[k] = pts[[int(round(np.interp(p, t, idx))) for p in pts].index(k)]
    if np.all(np.diff(trial) > 0) and not _violations(trial, sigma_range, eta_max):
        done = [float(trial[k]) for k in ks[1:-1]]
        return Grid(trial), done
    done = []
    for p in pts:
        k = int(np.argmin(np.abs(t - p)))
        if k in (0, n):
            continue
        trial = t.copy()
        trial[k] = p
        if np.all(np.diff(trial) > 0) and not _violations(trial, sigma_range, eta_max):
            t = trial
            done.append(p)
    return Grid(t), done


def eta_consistency_check(grid, psi, dlogpsi=None):
    """Compare ``eta_n`` of ``grid`` with ``-(ln psi)'`` at the grid points.

    ``psi`` is a callable; the log-derivative is taken from ``dlogpsi`` if
    given, otherwise from a centred difference.  Returns the deviations at
    the interior points ``t_1 .. t_N`` and their max.
    """
    gm = grid_metrics(grid)
    tn = grid.t[1:-1]
    if dlogpsi is None:
        e = 1e-6 * grid.T
        dl = (np.log(psi(tn + e)) - np.log(psi(tn - e))) / (2 * e)
    else:
        dl = np.asarray(dlogpsi(tn), dtype=float)
    dev = gm["eta"] + dl
    return {"deviation": dev, "max_deviation": float(np.max(np.abs(dev))), "eta": gm["eta"]}


def dump_density(density, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "psi"])
        for t, p in zip(density.grid.t[:-1], density.psi):
            wr.writerow([repr(float(t)), repr(float(p))])


def dump_grid(grid, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t"])
        for t in grid.t:
            wr.writerow([repr(float(t))])
