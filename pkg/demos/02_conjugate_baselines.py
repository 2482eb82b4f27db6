"""Run the three classical baselines and watch them walk the same path.

Conjugate gradients, BFGS, and memoryless BFGS all use exact line search
here. On a quadratic they generate parallel search directions and land on
the same iterates, finishing in exactly as many steps as the problem's
grade. That shared behavior is the reference the quasi-Newton subspace
method is measured against.
"""

import numpy as np

from qnsubspace import KrylovOracle, cg_solve, generate_problem, qn_exact_ls_solve
from qnsubspace.util import direction_angle

prob, x0 = generate_problem(n=10, grade=6, cond=25.0, seed=7)
oracle = KrylovOracle(prob, x0)
print(f"instance: n={prob.n}, grade={oracle.grade}, "
      f"cond={prob.condition_number():.1f}\n")

traces = {
    "cg": cg_solve(prob, x0, tol=1e-8),
    "bfgs": qn_exact_ls_solve(prob, x0, variant="bfgs", tol=1e-8),
    "memoryless": qn_exact_ls_solve(prob, x0, variant="memoryless", tol=1e-8),
}

for name, trace in traces.items():
    err = np.linalg.norm(trace.final_x - prob.solution())
    print(f"{name:>10}: {trace.status} in {trace.iterations} iterations "
        f"(grade {oracle.grade}), |x - x*| = {err:.2e}")

# search directions agree across methods up to scale, and match the
# oracle's conjugate directions
print("\nper-iteration direction angles against the oracle (radians):")
for name, trace in traces.items():
    angles = [
        direction_angle(rec.p, oracle.conjugate_direction(rec.k))
        for rec in trace.records
    ]
    print(f"{name:>10}: max {max(angles):.2e}")
