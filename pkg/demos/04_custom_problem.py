"""Setting up a small control problem of your own.

A damped oscillator ``x'' = -x - 0.1 x' + u`` is steered towards rest with
a bounded control.  The running cost is added through the Lagrange-to-Mayer
transformation, and the box-constrained problem is solved with projected
gradients.

    python3 demos/04_custom_problem.py
"""

import numpy as np

from peerocp import ControlProblem, Grid, augment_lagrange, optimize

A = np.array([[0.0, 1.0], [-1.0, -0.1]])
B = np.array([[0.0], [1.0]])

base = ControlProblem(
    2, 1, 6.0, [1.0, 0.0],
    f=lambda t, y, u: A @ y + B @ u,
    jac_y=lambda t, y, u: A,
    jac_u=lambda t, y, u: B,
    objective=lambda yT: 20.0 * float(yT @ yT),
    objective_grad=lambda yT: 40.0 * yT,
    lower=-0.25, upper=0.25,
)
prob = augment_lagrange(base, lambda t, y, u: 0.5 * float(u @ u),
                        lambda t, y, u: (np.zeros(2), np.asarray(u, dtype=float)))

grid = Grid.uniform(prob.T, 40)
rep = optimize(prob, "AP4o33vgi", grid, np.zeros((40, 4, 1)), tol=1e-8, max_iters=500)
print(rep.message, "after", rep.iterations, "iterations")
print(f"objective {rep.objective[0]:.5f} -> {rep.objective[-1]:.5f}, monotone: {rep.monotone}")
print("final state", np.round(rep.solution.yT[:2], 4))
print("controls at the bound:", int(np.sum(np.isclose(np.abs(rep.U), 0.25))), "of", rep.U.size)
