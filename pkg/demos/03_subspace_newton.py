"""Restricted Newton steps and the recursion that grows them.

A Newton step restricted to one direction is an exact line search in
disguise. Restricted to a basis it jumps straight to the minimizer over
that affine subspace. The extension recursion grows such a step one
conjugate direction at a time using only the current subspace gradient,
the previous direction, and Hessian products; composed from scratch it
reproduces every Krylov-subspace minimizer without any line search.
"""

import numpy as np

from qnsubspace import (
    KrylovOracle,
    exact_line_search,
    extend_step,
    generate_problem,
    newton_scaling,
    subspace_newton_general,
)

prob, x0 = generate_problem(n=8, grade=6, cond=40.0, seed=5)
oracle = KrylovOracle(prob, x0)

# one direction: the Newton scaling equals the exact line search step
rng = np.random.default_rng(0)
x = x0 + rng.standard_normal(prob.n)
p = rng.standard_normal(prob.n)
beta = newton_scaling(prob.gradient(x), p, prob.hessian_action(p))
alpha = exact_line_search(prob, x, p)
print(f"newton scaling {beta:+.6f}  vs  exact line search {alpha:+.6f}")

# several directions: lands on the minimizer over the affine subspace,
# so the new gradient is orthogonal to every basis vector
basis = [rng.standard_normal(prob.n) for _ in range(3)]
step, scalings = subspace_newton_general(basis, prob, x)
g_after = prob.gradient(x + step)
worst = max(abs(g_after @ v) / np.linalg.norm(v) for v in basis)
print(f"restricted Newton over 3 directions: worst |g'v|/|v| after = {worst:.2e}")

# grow the step one conjugate direction at a time from the steepest
# descent start; each partial step hits the next Krylov minimizer
g0 = prob.gradient(x0)
step = newton_scaling(g0, -g0, prob.hessian_action(-g0)) * (-g0)
q_prev = step.copy()
print("\ncomposed extension vs Krylov minimizers:")
for k in range(1, oracle.grade):
    miss = np.linalg.norm(x0 + step - oracle.minimizer(k))
    print(f"  k={k}: miss {miss:.2e}")
    ext = extend_step(step, q_prev, prob.gradient(x0 + step), prob.hessian_action)
    step, q_prev = ext.step, ext.direction
final = np.linalg.norm(x0 + step - prob.solution())
print(f"  k={oracle.grade}: miss {final:.2e} (the solution)")
