"""Phase-field model of prostate cancer growth under cytotoxic therapy (2D).

Three fields on an ``m x m`` cell-centred grid of the square ``[0, l_d]^2``
(micrometres, days): tumour phase field ``phi`` (Dirichlet zero),
nutrient ``sigma`` and tissue PSA ``p`` (both Neumann zero), stacked as
``y = (Phi, Sigma, P)`` with row-wise numbering.  The scalar control
``U(t)`` is the cytotoxic drug effect, restricted to ``[0, U_max]``.
"""

from __future__ import annotations

import csv
import functools
import logging
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..integrate import SolverOptions, forward_sweep
from ..problem import ControlProblem, Grid, augment_lagrange
from ..triplets import build_triplet

__all__ = [
    "PCaParameters",
    "PCa2D",
    "build_pca_problem",
    "pca_observables",
    "trapezoid_weights",
    "protocol_u0",
    "protocol_d3",
    "pretherapy_state",
    "write_observables",
    "PROTOCOLS",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PCaParameters:
    lam: float = 640.0            # phase-field diffusivity, um^2/day
    M: float = 2.5                # mobility, 1/day
    m_ref: float = 7.55e-2        # net proliferation scaling, 1/day
    K_p: float = 1.50e-2
    K_p_ref: float = 1.50e-2
    K_A: float = 1.37e-2
    K_A_ref: float = 2.10e-2
    eta: float = 6.4e4            # nutrient diffusivity, um^2/day
    S_h: float = 2.0
    S_c: float = 2.75
    gamma_h: float = 2.0
    gamma_c: float = 17.0
    sigma_l: float = 0.4
    sigma_r: float = 6.67e-2
    D: float = 640.0              # PSA diffusivity, um^2/day
    alpha_h: float = 1.712e-2
    alpha_c_factor: float = 15.0  # alpha_c = factor * alpha_h
    gamma_p: float = 0.274
    l_d: float = 3000.0
    a1: float = 150.0
    a2: float = 200.0
    c_sigma0: float = 1.0
    c_sigma1: float = -0.8
    c_p0: float = 0.0625
    c_p1: float = 0.7975
    beta_c: float = 1.59e-2       # m^2/mg
    d_c: float = 75.0             # mg/m^2
    tau_c: float = 5.0            # days
    U_max: float = 0.12
    T: float = 21.0
    T_pre: float = 60.0
    N_pre: int = 240

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("c_sigma1",):
                continue
            if not v > 0:
                raise ValueError(f"parameter {f.name} must be positive, got {v}")

    @property
    def alpha_c(self):
        return self.alpha_c_factor * self.alpha_h

    @property
    def rho(self):
        return self.K_p / self.K_p_ref

    @property
    def A(self):
        return -self.K_A / self.K_A_ref


# dose data of the three-dose protocol: (d_c in mg/m^2, t_c in days)
D3_DOSES = (58.49, 9.20, 5.03)
D3_TIMES = (2.85, 7.90, 9.16)


def protocol_u0(t, par=PCaParameters()):
    """Standard single-dose protocol ``m_ref beta_c d_c exp(-t/tau_c)``."""
    return par.m_ref * par.beta_c * par.d_c * np.exp(-np.asarray(t, dtype=float) / par.tau_c)


def protocol_d3(t, par=PCaParameters(), doses=D3_DOSES, times=D3_TIMES):
    """Three-dose protocol; each dose switches on at its time (right-continuous)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for d, tc in zip(doses, times):
        on = t >= tc
        out = out + np.where(on, par.m_ref * par.beta_c * d * np.exp(-(t - tc) / par.tau_c), 0.0)
    return out


def _zero(t):
    return np.zeros_like(np.asarray(t, dtype=float))


# protocol name -> (target U_d, default k4, initial guess)
PROTOCOLS = {
    "d1-target": (_zero, 6.0, protocol_u0),
    "d3-target": (protocol_d3, 60.0, protocol_u0),
}


def trapezoid_weights(m, dx):
    """Row ``W_tp = dx^2/4 (w1, w2, ..., w2, w1)`` over the cell centres.

    The rule treats the outermost cell centres as the ends of the domain,
    so the weights sum to ``((m - 1) dx)^2``.
    """
    w1 = np.full(m, 2.0)
    w1[[0, -1]] = 1.0
    return dx**2 / 4.0 * np.outer(w1, w1).ravel()


def _lap1d(m, dirichlet):
    main = -2.0 * np.ones(m)
    end = -3.0 if dirichlet else -1.0
    main[[0, -1]] = end
    off = np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian(m, dx, dirichlet):
    L = _lap1d(m, dirichlet)
    I = sp.identity(m, format="csr")
    return ((sp.kron(I, L) + sp.kron(L, I)) / dx**2).tocsr()


class PCa2D(ControlProblem):
    """Semi-discrete tumour model (without the running cost)."""

    def __init__(self, m_side=64, par=None, y0=None, k2=1.0):
        if m_side < 16:
            raise ValueError("m_side must be at least 16")
        self.par = par = par or PCaParameters()
        self.ms = m = int(m_side)
        self.n = n = m * m
        self.dx = par.l_d / m
        self.x = (np.arange(m) + 0.5) * self.dx
        self.W = trapezoid_weights(m, self.dx)
        self.k2 = float(k2)
        self.L_phi = laplacian(m, self.dx, True) * par.lam
        self.L_sig = laplacian(m, self.dx, False) * par.eta
        self.L_p = laplacian(m, self.dx, False) * par.D
        self._Lblock = sp.block_diag([self.L_phi, self.L_sig]).tocsr()
        self._Ipsi = sp.identity(n, format="csr")
        self._pcache = {}
        if y0 is None:
            y0 = self.initial_fields()
        super().__init__(3 * n, 1, par.T, y0, lower=0.0, upper=par.U_max, name="pca2d")

    # model functions ----------------------------------------------------------
    def initial_fields(self):
        p, L = self.par, self.par.l_d
        X1, X2 = np.meshgrid(self.x, self.x, indexing="xy")  # row-wise: x1 fastest
        r = np.sqrt((X1 - L / 2) ** 2 / p.a1**2 + (X2 - L / 2) ** 2 / p.a2**2)
        phi = (0.5 - 0.5 * np.tanh(10.0 * (r - 1.0))).ravel()
        return np.concatenate([phi, p.c_sigma0 + p.c_sigma1 * phi, p.c_p0 + p.c_p1 * phi])

    def split(self, y):
        n = self.n
        return y[:n], y[n:2 * n], y[2 * n:3 * n]

    def mfun(self, s):
        p = self.par
        return p.m_ref * ((p.rho + p.A) / 2 + (p.rho - p.A) / np.pi * np.arctan((s - p.sigma_l) / p.sigma_r))

    def dmfun(self, s):
        p = self.par
        z = (s - p.sigma_l) / p.sigma_r
        return p.m_ref * (p.rho - p.A) / (np.pi * p.sigma_r * (1.0 + z * z))

    def f(self, t, y, u):
        p = self.par
        phi, sig, psa = self.split(y)
        U = u[0] if np.ndim(u) else u
        dF = 2.0 * p.M * phi * (1 - phi) * (1 - 2 * phi)
        dh = 6.0 * p.M * phi * (1 - phi)
        fphi = self.L_phi @ phi - dF + (self.mfun(sig) - U) * dh
        fsig = (self.L_sig @ sig - p.gamma_h * sig - (p.gamma_c - p.gamma_h) * sig * phi
                + p.S_h * (1 - phi) + p.S_c * phi)
        fp = self.L_p @ psa - p.gamma_p * psa + p.alpha_h + (p.alpha_c - p.alpha_h) * phi
        return np.concatenate([fphi, fsig, fp])

    def _local(self, y, u):
        p = self.par
        phi, sig, _ = self.split(y)
        U = u[0] if np.ndim(u) else u
        d2F = 2.0 * p.M * (1 - 6 * phi + 6 * phi**2)
        d2h = 6.0 * p.M * (1 - 2 * phi)
        dh = 6.0 * p.M * phi * (1 - phi)
        a11 = -d2F + (self.mfun(sig) - U) * d2h
        a12 = self.dmfun(sig) * dh
        a21 = -(p.gamma_c - p.gamma_h) * sig - p.S_h + p.S_c
        a22 = -p.gamma_h - (p.gamma_c - p.gamma_h) * phi
        return a11, a12, a21, a22

    def _jac_phisig(self, y, u):
        a11, a12, a21, a22 = self._local(y, u)
        loc = sp.bmat([[sp.diags(a11), sp.diags(a12)], [sp.diags(a21), sp.diags(a22)]])
        return (self._Lblock + loc).tocsr()

    def jac_y(self, t, y, u):
        p = self.par
        n = self.n
        Jps = self._jac_phisig(y, u)
        Jpp = self.L_p - p.gamma_p * sp.identity(n)
        c = (p.alpha_c - p.alpha_h) * sp.identity(n)
        return sp.bmat([[Jps, None], [sp.hstack([c, sp.csr_matrix((n, n))]), Jpp]], format="csr")

    def jac_u(self, t, y, u):
        phi = y[:self.n]
        col = np.zeros((self.m, 1))
        col[:self.n, 0] = -6.0 * self.par.M * phi * (1 - phi)
        return col

    def objective(self, yT):
        phi = yT[:self.n]
        return self.k2 * float(self.W @ phi**2)

    def objective_grad(self, yT):
        g = np.zeros(self.m)
        g[:self.n] = 2.0 * self.k2 * self.W * yT[:self.n]
        return g

    def _p_solver(self, alpha, gamma):
        key = (float(alpha), float(gamma))
        lu = self._pcache.get(key)
        if lu is None:
            if len(self._pcache) > 4096:
                self._pcache.clear()
            M = (alpha * sp.identity(self.n) - gamma * (self.L_p - self.par.gamma_p * sp.identity(self.n)))
            lu = self._pcache[key] = spla.splu(M.tocsc())
        return lu

    def shifted_solver(self, alpha, gamma, t, y, u):
        # PSA is driven by phi but does not feed back: block triangular solve
        n = self.n
        M = (alpha * sp.identity(2 * n) - gamma * self._jac_phisig(y, u)).tocsc()
        lu = spla.splu(M)
        lp = self._p_solver(alpha, gamma)
        cpl = gamma * (self.par.alpha_c - self.par.alpha_h)

        def solve(b, trans=False):
            b = np.asarray(b, dtype=float)
            out = np.empty_like(b)
            if trans:
                out[2 * n:] = lp.solve(b[2 * n:], trans="T")
                r = b[:2 * n].copy()
                r[:n] += cpl * out[2 * n:]
                out[:2 * n] = lu.solve(r, trans="T")
            else:
                out[:2 * n] = lu.solve(b[:2 * n])
                out[2 * n:] = lp.solve(b[2 * n:] + cpl * out[:n])
            return out

        return solve


@functools.lru_cache(maxsize=8)
def _pretherapy_cached(m_side, triplet, par):
    base = PCa2D(m_side, par)
    grid = Grid.uniform(par.T_pre, par.N_pre)
    T = build_triplet(triplet)
    U = np.zeros((grid.steps, T.s, 1))
    log.info("pre-therapy run: %d days, %d steps, m_side=%d", par.T_pre, par.N_pre, m_side)
    sol = forward_sweep(base, T, grid, U, SolverOptions(newton_tol=1e-10))
    return sol.yT.copy()


def pretherapy_state(m_side=64, triplet="AP4o33vgi", par=None):
    """Fields after the untreated growth phase (cached per resolution)."""
    par = par or PCaParameters()
    return _pretherapy_cached(int(m_side), build_triplet(triplet).name, par).copy()


def build_pca_problem(m_side=64, protocol="d1-target", k1=1.0, k2=1.0, k3=1.0, k4=None,
                      par=None, triplet="AP4o33vgi", pretherapy=True):
    """Mayer form with the running cost

    ``k1 W phi^2 + k3 (W (p - alpha_h/gamma_p))^2 + k4 (W 1)(U - U_d(t))^2``

    and terminal cost ``k2 W phi(T)^2``.  The initial state is the end of
    the untreated phase unless ``pretherapy`` is false.
    """
    if protocol not in PROTOCOLS:
        raise KeyError(f"unknown protocol {protocol!r}; known: {sorted(PROTOCOLS)}")
    target, k4_default, guess = PROTOCOLS[protocol]
    k4 = k4_default if k4 is None else k4
    for name, v in (("k1", k1), ("k2", k2), ("k3", k3), ("k4", k4)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative")
    par = par or PCaParameters()
    y0 = pretherapy_state(m_side, triplet, par) if pretherapy else None
    base = PCa2D(m_side, par, y0=y0, k2=k2)
    n, W = base.n, base.W
    Wsum = float(W.sum())
    pref = par.alpha_h / par.gamma_p
    par_target = functools.partial(target, par=par) if target is not _zero else target

    def running(t, y, u):
        phi, _, psa = base.split(y)
        e = float(W @ (psa - pref))
        du = float(u[0] - par_target(t))
        return k1 * float(W @ phi**2) + k3 * e * e + k4 * Wsum * du * du

    def grad_running(t, y, u):
        phi, _, psa = base.split(y)
        gy = np.zeros(3 * n)
        gy[:n] = 2.0 * k1 * W * phi
        gy[2 * n:] = 2.0 * k3 * float(W @ (psa - pref)) * W
        gu = np.array([2.0 * k4 * Wsum * float(u[0] - par_target(t))])
        return gy, gu

    prob = augment_lagrange(base, running, grad_running, name="pca2d")
    prob.protocol = protocol
    prob.target = par_target
    prob.initial_guess = functools.partial(guess, par=par)
    prob.weights = {"k1": k1, "k2": k2, "k3": k3, "k4": k4}
    prob.dose_times = tuple(D3_TIMES) if protocol == "d3-target" else ()
    prob.par = par

    if k4 > 0:
        def argmin(t, y, p):
            # H is quadratic in U: p_phi . (-h'(phi)) U + p_c k4 W1 (U - U_d)^2
            phi = y[:n]
            lin = -6.0 * par.M * float(p[:n] @ (phi * (1 - phi)))
            return np.array([par_target(t) - lin / (2.0 * k4 * Wsum * p[3 * n])])
        prob._argmin = argmin
    return prob


def pca_observables(problem, sol):
    """Tumour volume ``V_phi = W phi`` and serum PSA ``P_s = W p`` at the grid points,
    plus the cost contributions of the running and terminal terms."""
    base = getattr(problem, "base", problem)
    T = build_triplet(sol.triplet)
    l0 = T.interpolation_row(0.0)
    pts = np.einsum("i,nim->nm", l0, sol.Y)
    pts[0] = problem.y0  # the initial value is data, not an approximation
    pts = np.vstack([pts, sol.yT[None, :]])
    n = base.n
    W = base.W
    V = pts[:, :n] @ W
    Ps = pts[:, 2 * n:3 * n] @ W
    out = {"t": np.asarray(sol.grid.t), "V_phi": V, "P_s": Ps}
    if hasattr(problem, "weights"):
        k = problem.weights
        par = problem.par
        pref = par.alpha_h / par.gamma_p
        st = sol.stage_times
        quad = np.outer(sol.grid.h, T.kappa)
        phi = sol.Y[..., :n]
        psa = sol.Y[..., 2 * n:3 * n]
        J1 = k["k1"] * float(np.sum(quad * np.einsum("nim,m->ni", phi**2, W)))
        e = np.einsum("nim,m->ni", psa - pref, W)
        J3 = k["k3"] * float(np.sum(quad * e**2))
        du = sol.U[..., 0] - problem.target(st)
        J4 = k["k4"] * float(W.sum()) * float(np.sum(quad * du**2))
        J2 = k["k2"] * float(W @ sol.yT[:n] ** 2)
        out.update(J1=J1, J2=J2, J3=J3, J4=J4)
    return out


def write_observables(obs, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "V_phi", "P_s"])
        for row in zip(obs["t"], obs["V_phi"], obs["P_s"]):
            wr.writerow([repr(float(v)) for v in row])


def with_parameters(par, **kw):
    """Copy of ``par`` with some fields replaced."""
    return replace(par, **kw)


def parameters_dict(par):
    return asdict(par)
