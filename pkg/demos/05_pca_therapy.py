"""Optimal chemotherapy for a phase-field prostate tumour model.

After a 60 day untreated phase the drug dose is optimized over 21 days.
The default resolution is 32 x 32 (a few minutes); pass a side length as
argument for other resolutions.  Writes the tumour volume and serum PSA of
the untreated and the treated run to ``pca_observables_*.csv``.

    python3 demos/05_pca_therapy.py [m_side]
"""

import sys

import numpy as np

from peerocp import Grid, forward_sweep
from peerocp.benchmarks.pca import build_pca_problem, pca_observables, write_observables
from peerocp.workflows import run_optimizer

m_side = int(sys.argv[1]) if len(sys.argv) > 1 else 32
prob = build_pca_problem(m_side, "d1-target")
grid = Grid.uniform(prob.T, 84)

untreated = forward_sweep(prob, "AP4o33vgi", grid, np.zeros((84, 4, 1)))
rep = run_optimizer(prob, "AP4o33vgi", grid, tol=1e-5, max_iters=25,
                    callback=lambda k, U, C, s: print(f"  iteration {k}: cost {C:.6e}, stationarity {s:.2e}"))

o0 = pca_observables(prob, untreated)
o1 = pca_observables(prob, rep.solution)
write_observables(o0, f"pca_observables_untreated_{m_side}.csv")
write_observables(o1, f"pca_observables_treated_{m_side}.csv")
print(f"tumour volume at day 21: untreated {o0['V_phi'][-1]:.4g} um^2, treated {o1['V_phi'][-1]:.4g} um^2")
print("cost terms:", {k: f"{o1[k]:.3e}" for k in ("J1", "J2", "J3", "J4")})
print("dose profile (first stage per step):", np.round(rep.U[::10, 0, 0], 4))
