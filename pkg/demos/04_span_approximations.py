"""Positive definite operators that copy the Hessian on a chosen span.

The approximation B acts as H on span(P) and as sigma times the identity
on the orthogonal complement. Built from the method's own direction pairs
it turns the next quasi-Newton solve into a restricted Newton step plus
one new scaled conjugate direction, and a specific sigma makes that solve
a full Newton step onto the next Krylov minimizer.
"""

import numpy as np

from qnsubspace import (
    KrylovOracle,
    SpanApprox,
    build_full_memory,
    generate_problem,
    newton_sigma,
    solve_direction,
)
from qnsubspace.trace import DirectionHistory

prob, x0 = generate_problem(n=7, grade=5, cond=20.0, seed=11)
oracle = KrylovOracle(prob, x0)

# span the first two conjugate directions
P = np.column_stack([oracle.conjugate_direction(k) for k in range(2)])
B = SpanApprox(P, prob.H @ P, sigma=3.0)

eigs = np.linalg.eigvalsh(B.dense())
print(f"eigenvalues of B: {np.round(eigs, 6)}")
print(f"reproduces curvature on the span: |BP - HP| = "
      f"{np.abs(B.dense() @ P - prob.H @ P).max():.2e}")

v = np.array([1.0, -2.0, 0.5, 0.0, 1.0, 0.0, -1.0])
W = np.column_stack([P, prob.H @ P])
v -= W @ np.linalg.lstsq(W, v, rcond=None)[0]  # project out span(P) + span(HP)
print(f"acts as sigma*I off the span and its image: |Bv - 3v| = "
      f"{np.linalg.norm(B.matvec(v) - 3.0 * v):.2e}")

# full-memory variant from a direction history
hist = DirectionHistory()
for k in range(3):
    q = oracle.conjugate_direction(k)
    hist.append(q, prob.hessian_action(q))
B3 = build_full_memory(hist, sigma=1.0)
x3 = oracle.minimizer(3)

# with the tuned sigma, solving B p = -g from the third minimizer lands
# exactly on the fourth; the upcoming conjugate direction is the negated
# subspace gradient made conjugate to the previous direction
g3 = prob.gradient(x3)
q2 = oracle.conjugate_direction(2)
h_q2 = prob.hessian_action(q2)
coef = float(g3 @ h_q2) / float(q2 @ h_q2)
q_up = -g3 + coef * q2
sigma_star = newton_sigma(q_up, prob.hessian_action(q_up), g3)
p = solve_direction(B3.with_sigma(sigma_star), g3)
miss = np.linalg.norm(x3 + p - oracle.minimizer(4))
print(f"\ntuned sigma {sigma_star:.4f}: one solve from minimizer(3) "
      f"misses minimizer(4) by {miss:.2e}")

# any other sigma still moves along the right ray, just the wrong length
p_generic = solve_direction(B3, g3)
cos = abs(p_generic @ p) / (np.linalg.norm(p_generic) * np.linalg.norm(p))
print(f"generic sigma 1.0: same direction (cos angle {cos:.12f}), "
      f"length ratio {np.linalg.norm(p_generic) / np.linalg.norm(p):.4f}")
