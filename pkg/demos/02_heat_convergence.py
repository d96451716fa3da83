"""Convergence of the discrete optimum for the boundary-controlled heat equation.

The optimal control is known in closed form, so the errors of the control,
the final state and the initial adjoint can be tabulated directly.  Pass
``--quick`` for a smaller spatial grid.

    python3 demos/02_heat_convergence.py [--quick]
"""

import sys

from peerocp.benchmarks import build_heat_problem
from peerocp.workflows import fitted_order, heat_convergence

m = 60 if "--quick" in sys.argv else 250
steps = [16, 32, 64, 128]
prob = build_heat_problem(m)

for name in ("AP4o33vgi", "AP4o33vsi"):
    rows = heat_convergence(prob, name, steps)
    print(f"\n{name}, m = {m}")
    print("  N+1     |u - u*|     |yT - y*(T)|  |p0 - p*(0)|   CG iterations")
    for r in rows:
        print(f"  {r['steps']:4d}  {r['u']:.3e}   {r['yT']:.3e}     {r['p0']:.3e}     {r['iterations']}")
    for key in ("u", "yT", "p0"):
        print(f"  fitted order of {key}: {fitted_order(steps, [r[key] for r in rows]):.2f}")
