"""Algebraic and spectral checks of a Peer triplet.

Everything here is a pure function of the coefficients.  Residuals are
reported in the max norm; nothing raises on a failed check, callers read
the reports.
"""

from __future__ import annotations

from collections import namedtuple
from fractions import Fraction

import numpy as np

from .triplets import (
    build_triplet,
    flip,
    pascal,
    ratio_scaling,
    shift_matrix,
    vandermonde,
)

__all__ = [
    "verify_order_conditions",
    "verify_structure",
    "error_coefficients",
    "error_constants",
    "superconvergence_residual",
    "zero_stability_norm",
    "product_boundedness",
    "stability_scan",
    "imaginary_axis_scan",
    "contraction_factors",
    "eigenvalue_margin",
]


def _mx(x):
    return float(np.max(np.abs(x))) if np.size(x) else 0.0


def _check_sigma(sigma):
    sigma = float(sigma)
    if not sigma > 0:
        raise ValueError(f"stepsize ratio must be positive, got {sigma}")
    return sigma


def verify_order_conditions(triplet, sigma=1.0):
    """Max-norm residuals of the forward, adjoint and boundary order conditions.

    Keys: ``forward``, ``adjoint``, ``start``, ``end``, ``start_rank``,
    ``end_rank`` (the last two are the two halves of the rank-one check).
    """
    T = build_triplet(triplet)
    sigma = _check_sigma(sigma)
    q = T.q
    Vq = vandermonde(T.c, q)
    P = pascal(q)
    E = shift_matrix(q)
    S = ratio_scaling(q, sigma)
    K = T.K
    B = T.B(sigma)
    KVE = K @ Vq @ E
    e1 = np.eye(q)[0]
    res = {
        "forward": _mx(T.A @ Vq - KVE - B @ Vq @ np.linalg.solve(S @ P, np.eye(q))),
        "adjoint": _mx(T.A.T @ Vq + KVE - B.T @ Vq @ S @ P),
        "start": _mx(T.A0 @ Vq - np.outer(T.a, e1) - KVE),
        "end": _mx(T.AN.T @ Vq + KVE - np.outer(T.w, np.ones(q))),
        "start_rank": _mx(Vq.T @ (T.A0 - T.A)),
        "end_rank": _mx((T.AN - T.A) @ Vq),
    }
    res["max"] = max(res.values())
    return res


def _q_matrix(T, sigma, q):
    Vq = vandermonde(T.c, q)
    return Vq.T @ T.B(sigma) @ Vq @ np.linalg.inv(pascal(q))


def _exact_flip_defects(T):
    ex = T.exact
    if not ex or ex.get("A") is None:
        return None
    s = T.s
    A, A0, AN, kap = ex["A"], ex["A0"], ex["AN"], ex["kappa"]
    a, w = ex["a"], ex["w"]
    r = lambda i: s - 1 - i
    d = {
        "PAP-AT": max(abs(A[r(i)][r(j)] - A[j][i]) for i in range(s) for j in range(s)),
        "PKP-K": max(abs(kap[r(i)] - kap[i]) for i in range(s)),
        "PANP-A0T": max(abs(AN[r(i)][r(j)] - A0[j][i]) for i in range(s) for j in range(s)),
        "w-Pa": max(abs(w[i] - a[r(i)]) for i in range(s)),
    }
    return {k: Fraction(v) for k, v in d.items()}


def verify_structure(triplet, sigmas=(0.5, 0.8, 1.0, 1.3, 2.0), rank_tol=1e-10):
    """Structural properties: Q matrix, LSRK form, rank-one boundaries, flips.

    Returns a dict of named entries, each with a numeric ``value`` and a
    boolean ``ok``.  Flip identities are evaluated in exact arithmetic when
    rational data are available (the vsi triplet is not self-adjoint, so its
    flip entries are informational).
    """
    T = build_triplet(triplet)
    s, q = T.s, T.q
    out = {}

    qdev = max(_mx(_q_matrix(T, sg, q) - np.outer(np.eye(q)[0], np.eye(q)[0])) for sg in sigmas)
    out["Q_qq"] = dict(value=qdev, ok=qdev <= 1e-10)

    V = T.V
    ones = np.ones(s)
    es = np.eye(s)[-1]
    lsrk = _mx(ones @ T.A - es)
    out["lsrk"] = dict(value=lsrk, ok=lsrk <= 1e-12 and abs(T.c[-1] - 1.0) <= 1e-15)
    # adjoint LSRK: Ahat e1 = e1 and c1 = 0, with Ahat = V^T A V
    Ahat = V.T @ T.A @ V
    e1 = np.eye(s)[0]
    adj = _mx(Ahat @ e1 - e1)
    out["lsrk_adjoint"] = dict(value=adj, ok=adj <= 1e-12 and T.c[0] == 0.0)

    for key, D in (("start", T.A0 - T.A), ("end", T.AN - T.A)):
        sv = np.linalg.svd(D, compute_uv=False)
        rank = int(np.sum(sv > rank_tol * max(1.0, sv[0])))
        out[f"rank_{key}"] = dict(value=rank, ok=rank == 1)

    # phi vectors and their constraints from the boundary order conditions
    phi0 = (V.T @ (T.A0 - T.A))[-1]
    phiN = (T.AN - T.A) @ V @ es
    Qs = V.T @ T.B(1.0) @ vandermonde(T.c, q) @ np.linalg.inv(pascal(q))
    Bh1 = T.Bhat(1.0)
    # the start constraint binds phi0 through the first q monomials
    phi0_q = phi0 @ vandermonde(T.c, q)
    c0 = max(abs(phi0_q[j] + Qs[-1, j]) for j in range(1, q))
    cN_vec = phiN @ vandermonde(T.c, q) @ np.linalg.inv(pascal(q))
    cN = max(abs(cN_vec[j] + Bh1[j, -1]) for j in range(1, q))
    out["phi0"] = dict(value=phi0.tolist(), ok=True)
    out["phiN"] = dict(value=phiN.tolist(), ok=True)
    out["phi_constraints"] = dict(value=max(c0, cN), ok=max(c0, cN) <= 1e-10)

    for key, (Ab, At) in (("start", (T.A0, T.At0)), ("end", (T.AN, T.AtN))):
        R = Ab - At
        low = _mx(np.tril(R, -1))
        out[f"upper_{key}"] = dict(value=low, ok=low == 0.0)
        tri = _mx(np.triu(At, 1))
        out[f"lower_tilde_{key}"] = dict(value=tri, ok=tri == 0.0)

    ok_a = _mx(T.A0 @ ones - T.a) <= 1e-14 and _mx(T.AN.T @ ones - T.w) <= 1e-14
    out["a_w"] = dict(value=max(_mx(T.A0 @ ones - T.a), _mx(T.AN.T @ ones - T.w)), ok=ok_a)

    ev = max(
        max(_mx(T.Bbar(sg) @ ones - ones), _mx((ones @ T.A) @ T.Bbar(sg) - ones @ T.A))
        for sg in sigmas
    )
    out["eigenvectors"] = dict(value=ev, ok=ev <= 1e-12)

    exact = _exact_flip_defects(T)
    Pi = flip(s)
    if exact is not None and all(v == 0 for v in exact.values()):
        out["flip"] = dict(value={k: str(v) for k, v in exact.items()}, ok=True, exact=True)
    else:
        fl = max(_mx(Pi @ T.A @ Pi - T.A.T), _mx(Pi @ T.K @ Pi - T.K),
                 _mx(Pi @ T.AN @ Pi - T.A0.T), _mx(T.w - Pi @ T.a))
        out["flip"] = dict(value=fl, ok=fl <= 1e-12, exact=False)
    for entry in out.values():
        entry["ok"] = bool(entry["ok"])
    return out


def _beta(Am, B, K, c, sigma):
    return np.linalg.solve(Am, Am @ c**3 - B @ (c - 1) ** 3 / sigma**3 - 3 * K @ c**2) / 6.0


def _beta_adj(Am, B, K, c, sigma):
    return np.linalg.solve(Am.T, Am.T @ c**3 - B.T @ (1 + sigma * c) ** 3 + 3 * K @ c**2) / 6.0


def error_coefficients(triplet, sigma=1.0):
    """Leading local error vectors of the standard and boundary methods.

    Returns ``beta``, ``beta_adj`` (standard method at ratio ``sigma``),
    ``beta_0`` (forward start), ``beta_N_adj`` (adjoint terminal step),
    and the companions ``beta_0_adj``/``beta_N`` obtained by inserting the
    boundary matrix into the standard-method formulas at ``sigma``.
    """
    T = build_triplet(triplet)
    sigma = _check_sigma(sigma)
    c, K = T.c, T.K
    B = T.B(sigma)
    return {
        "beta": _beta(T.A, B, K, c, sigma),
        "beta_adj": _beta_adj(T.A, B, K, c, sigma),
        "beta_0": (c**3 - 3 * np.linalg.solve(T.A0, K @ c**2)) / 6.0,
        "beta_N_adj": (c**3 + 3 * np.linalg.solve(T.AN.T, K @ c**2) - 1.0) / 6.0,
        "beta_0_adj": _beta_adj(T.A0, B, K, c, sigma),
        "beta_N": _beta(T.AN, B, K, c, sigma),
    }


def error_constants(triplet):
    """Max norms of the error vectors at ``sigma = 1``."""
    b = error_coefficients(triplet, 1.0)
    n = lambda k: float(np.max(np.abs(b[k])))
    return {
        "err3": n("beta"),
        "err3_adj": n("beta_adj"),
        "err3_0": n("beta_0"),
        "err3_0_adj": n("beta_0_adj"),
        "err3_N": n("beta_N"),
        "err3_N_adj": n("beta_N_adj"),
    }


def superconvergence_residual(triplet, sigma):
    """``(1^T A beta(sigma), 1^T A^T beta_adj(sigma))``."""
    T = build_triplet(triplet)
    b = error_coefficients(T, sigma)
    ones = np.ones(T.s)
    return float(ones @ T.A @ b["beta"]), float(ones @ T.A.T @ b["beta_adj"])


ZeroStability = namedtuple("ZeroStability", "value method")


def zero_stability_norm(triplet, sigma):
    """Weighted norm ``||W^{-1} A^{-1} B(sigma) W||_inf``.

    Without a weight matrix the spectral radius of ``A^{-1}B(sigma)`` is
    returned and ``method`` says so.
    """
    T = build_triplet(triplet)
    sigma = _check_sigma(sigma)
    Bb = T.Bbar(sigma)
    if T.W is not None:
        M = np.linalg.solve(T.W, Bb @ T.W)
        return ZeroStability(float(np.linalg.norm(M, np.inf)), "weighted")
    return ZeroStability(float(max(abs(np.linalg.eigvals(Bb)))), "spectral_radius")


def product_boundedness(triplet, sigma_range=None, n_sequences=200, k_max=200, seed=0):
    """Largest ``||Bbar(s_k)...Bbar(s_1)||_inf`` over random ratio sequences.

    Every prefix of each sequence counts, so short products are covered too.
    Returns ``(max_norm, argmax_length)``.
    """
    T = build_triplet(triplet)
    lo, hi = sigma_range if sigma_range is not None else T.sigma_range
    rng = np.random.default_rng(seed)
    grid = np.linspace(lo, hi, 64)
    table = {i: T.Bbar(sg) for i, sg in enumerate(grid)}
    worst, where = 0.0, 0
    # extreme ratios first, then random sequences
    seqs = [np.full(k_max, 0), np.full(k_max, len(grid) - 1)]
    seqs += [rng.integers(0, len(grid), k_max) for _ in range(n_sequences)]
    for seq in seqs:
        M = np.eye(T.s)
        for k, idx in enumerate(seq, 1):
            M = table[int(idx)] @ M
            nrm = np.linalg.norm(M, np.inf)
            if nrm > worst:
                worst, where = float(nrm), k
    return worst, where


def _spectral_radii(mats):
    return np.max(np.abs(np.linalg.eigvals(mats)), axis=-1)


def _rho_M(T, z):
    """Spectral radii of ``(A - zK)^{-1} B(1)`` for an array of ``z``."""
    z = np.asarray(z, dtype=complex).ravel()
    B = T.B(1.0).astype(complex)
    lhs = T.A[None] - z[:, None, None] * T.K[None]
    M = np.linalg.solve(lhs, np.broadcast_to(B, lhs.shape))
    return _spectral_radii(M)


def stability_scan(triplet, angle_deg, radius_samples=600, angle_samples=91,
                   r_min=1e-4, r_max=1e6, tol=1e-8):
    """Sample ``rho(M(z))`` over the sector ``|arg z - pi| <= angle_deg``.

    Radii are log-spaced in ``[r_min, r_max]``; by conjugate symmetry only
    the upper half of the sector is scanned.  Returns ``(passed, worst)``.
    """
    if angle_deg > 90:
        raise ValueError("sector angle must not exceed 90 degrees")
    T = build_triplet(triplet)
    r = np.logspace(np.log10(r_min), np.log10(r_max), radius_samples)
    th = np.deg2rad(np.linspace(0.0, angle_deg, angle_samples))
    z = (r[:, None] * np.exp(1j * (np.pi - th[None, :]))).ravel()
    worst = float(np.max(_rho_M(T, z)))
    return worst <= 1.0 + tol, worst


def imaginary_axis_scan(triplet, xi_max=1.0, samples=2001, tol=1e-8):
    """``max rho(M(i xi))`` for ``xi`` in ``[-xi_max, xi_max]``."""
    T = build_triplet(triplet)
    xi = np.linspace(-xi_max, xi_max, samples)
    worst = float(np.max(_rho_M(T, 1j * xi)))
    return worst <= 1.0 + tol, worst


ContractionFactors = namedtuple("ContractionFactors", "rho_real rho_alpha rho_zero skipped")


def contraction_factors(triplet, which, angle_deg=None, radius_samples=400, angle_samples=40,
                        r_min=1e-6, r_max=1e8):
    """Contraction factors of the triangular boundary iteration.

    The iteration matrix is ``S(z) = (At - zK)^{-1}(At - A_b)``.  ``rho_real``
    is its largest spectral radius on the negative real axis, ``rho_alpha``
    on the sector of half-angle ``angle_deg`` (default: the triplet's stability
    angle).  Samples with a singular ``At - zK`` are skipped and counted.
    """
    T = build_triplet(triplet)
    Ab, At = T.boundary(which)
    if angle_deg is None:
        angle_deg = T.alpha_deg
    r = np.logspace(np.log10(r_min), np.log10(r_max), radius_samples)
    th = np.deg2rad(np.linspace(-angle_deg, angle_deg, angle_samples))

    R = (At - Ab).astype(complex)

    def radii(z):
        lhs = At[None].astype(complex) - z[:, None, None] * T.K[None]
        det = np.abs(np.linalg.det(lhs))
        good = det > 1e-14 * np.max(np.abs(lhs), axis=(1, 2)) ** T.s
        out = np.full(z.shape, np.nan)
        if good.any():
            M = np.linalg.solve(lhs[good], np.broadcast_to(R, lhs[good].shape))
            out[good] = _spectral_radii(M)
        return out, int(np.sum(~good))

    rr, sk1 = radii(-r.astype(complex))
    ra, sk2 = radii((r[:, None] * np.exp(1j * (np.pi + th[None, :]))).ravel())
    rho0 = float(max(abs(np.linalg.eigvals(np.linalg.solve(At, At - Ab)))))
    return ContractionFactors(float(np.nanmax(rr)), float(np.nanmax(ra)), rho0, sk1 + sk2)


def eigenvalue_margin(triplet, which):
    """``min Re lambda(K^{-1} A_b)`` for the start or end matrix."""
    T = build_triplet(triplet)
    Ab, _ = T.boundary(which)
    return float(np.min(np.linalg.eigvals(np.linalg.solve(T.K, Ab)).real))
