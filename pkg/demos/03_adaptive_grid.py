"""One solve / estimate / equidistribute / re-solve cycle on the heat problem.

The global errors of state and adjoint are estimated from third
differences of the stage values, combined into a mesh density and a new
grid with the same number of steps is built from it.

    python3 demos/03_adaptive_grid.py
"""

import numpy as np

from peerocp import Grid
from peerocp.benchmarks import build_heat_problem
from peerocp.workflows import adapt_grid, heat_errors, run_optimizer

prob = build_heat_problem(250)
name = "AP4o33vgi"
for steps in (16, 32):
    uniform = Grid.uniform(prob.T, steps)
    rep = run_optimizer(prob, name, uniform, tol=1e-9)
    grid, density, info = adapt_grid(prob, name, rep.solution, steps)
    rep2 = run_optimizer(prob, name, grid, tol=1e-9)
    e1 = heat_errors(prob, name, rep.solution, rep.U)["u"]
    e2 = heat_errors(prob, name, rep2.solution, rep2.U)["u"]
    m = info.metrics
    print(f"N+1 = {steps}: weight omega = {density.omega:.3g}, "
          f"ratios in [{m['sigma_min']:.3f}, {m['sigma_max']:.3f}], max |eta| = {m['eta_max']:.2f}")
    print(f"  control error {e1:.3e} (uniform) -> {e2:.3e} (adapted), gain {e1 / e2:.1f}")
    print("  smallest steps near", np.round(grid.t[np.argsort(grid.h)[:3]], 3))
