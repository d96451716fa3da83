"""Coefficient properties of the two Peer triplets.

Prints order-condition residuals over the admissible stepsize ratios,
the leading error constants, the stability angle check and the
contraction factors of the boundary iterations.

    python3 demos/01_triplet_properties.py
"""

import numpy as np

from peerocp import (build_triplet, contraction_factors, error_constants, stability_scan,
                     verify_order_conditions, verify_structure, zero_stability_norm)

for name in ("AP4o33vgi", "AP4o33vsi"):
    T = build_triplet(name)
    lo, hi = T.sigma_range
    print(f"\n{name}: nodes {np.round(T.c, 4)}, ratios in [{lo}, {hi}], {T.grid_class} grids")

    worst = max(verify_order_conditions(T, s)["max"] for s in np.linspace(lo, hi, 25))
    print(f"  largest order-condition residual: {worst:.1e}")

    failed = [k for k, v in verify_structure(T).items() if not v["ok"]]
    print(f"  structural checks not satisfied: {failed or 'none'}")

    ec = error_constants(T)
    print("  error constants: " + ", ".join(f"{k}={v:.3g}" for k, v in ec.items()))

    z = [zero_stability_norm(T, s) for s in np.linspace(lo, hi, 9)]
    print(f"  zero stability ({z[0].method}): max {max(v.value for v in z):.6f}")

    ok, rho = stability_scan(T, T.alpha_deg)
    print(f"  A({T.alpha_deg})-stable on the sample grid: {ok} (max radius {rho:.8f})")

    for which in ("start", "end"):
        cf = contraction_factors(T, which)
        print(f"  {which} iteration: rho_R={cf.rho_real:.4f}, rho_alpha={cf.rho_alpha:.4f}")
