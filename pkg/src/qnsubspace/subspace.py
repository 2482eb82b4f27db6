"""Newton steps restricted to a subspace, and their one-direction extension.

For a basis S of a subspace, the restricted Newton step from x solves
(S'HS) b = -S'g(x) and moves by S b. Over a set of mutually H-conjugate
directions the system diagonalizes and each coefficient reduces to the
one-dimensional scaling -g'q / q'Hq. :func:`extend_step` grows a restricted
Newton step by one direction in closed form, without refactoring anything.
"""

from typing import NamedTuple

import numpy as np
from numpy.linalg import norm
from scipy.linalg import cho_factor, cho_solve

from .errors import DegenerateBasisError, NotPositiveDefiniteError

# Relative floor for the 2x2 determinant in extend_step; below it the new
# gradient is (numerically) inside the current span.
EXTEND_DET_RTOL = 1e-14


def newton_scaling(g, q, h_q):
    """Coefficient b = -g'q / q'Hq making x + b q stationary along q."""
    curv = float(q @ h_q)
    if curv <= 0.0:
        raise NotPositiveDefiniteError(
            f"direction has nonpositive curvature q'Hq = {curv:.3e}"
        )
    return -float(g @ q) / curv


class SubspaceNewtonStep(NamedTuple):
    """Restricted Newton step: the move itself plus its basis coefficients."""

    step: np.ndarray
    scalings: np.ndarray


def subspace_newton_general(basis, prob, x):
    """Newton step from x restricted to span(basis).

    Parameters
    ----------
    basis : sequence of ndarray
        Linearly independent spanning vectors; may be empty (zero step).
        ``scalings[i]`` pairs with ``basis[i]``.
    prob : QuadraticProblem
        Supplies the gradient and the Hessian action; H is never factored.
    x : ndarray
        Point the step is taken from.
    """
    cols = [np.asarray(v, dtype=float) for v in basis]
    x = np.asarray(x, dtype=float)
    if not cols:
        return SubspaceNewtonStep(np.zeros_like(x), np.zeros(0))
    S = np.column_stack(cols)
    HS = np.column_stack([prob.hessian_action(v) for v in cols])
    G = S.T @ HS
    G = 0.5 * (G + G.T)
    try:
        factor = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateBasisError(
            "basis is linearly dependent (projected Hessian is singular)"
        ) from exc
    b = cho_solve(factor, -(S.T @ prob.gradient(x)))
    return SubspaceNewtonStep(S @ b, b)


class StepExtension(NamedTuple):
    """Result of growing a restricted Newton step by one direction.

    ``direction`` is the increment beta * g_hat + gamma * q_prev: the next
    conjugate direction, already scaled so that adding it to the previous
    constrained minimizer lands exactly on the next one.
    """

    step: np.ndarray
    beta: float
    gamma: float
    direction: np.ndarray


def extend_step(newton_prev, q_prev, g_hat, h_action):
    """Extend a restricted Newton step across one more direction, in closed form.

    Given the Newton step ``newton_prev`` over the current span from some
    point x, the most recent conjugate direction ``q_prev``, and the gradient
    ``g_hat`` at the minimizer over that span, returns the Newton step from x
    over the span grown by g_hat. The 2x2 system in (g_hat, q_prev) is solved
    with the explicit adjugate:

        D     = (g'Hg)(q'Hq) - (g'Hq)^2
        beta  = -(g'g)(q'Hq) / D
        gamma =  (g'g)(q'Hg) / D

    beta and the product gamma * q_prev do not depend on the scaling of
    q_prev. A determinant at or below the relative floor means the span
    cannot grow: the minimizer over it is already stationary (or the inputs
    are degenerate), reported as :class:`DegenerateBasisError`.
    """
    newton_prev = np.asarray(newton_prev, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    h_g = np.asarray(h_action(g_hat), dtype=float)
    h_q = np.asarray(h_action(q_prev), dtype=float)
    gg = float(g_hat @ g_hat)
    g_h_g = float(g_hat @ h_g)
    q_h_q = float(q_prev @ h_q)
    g_h_q = float(g_hat @ h_q)
    det = g_h_g * q_h_q - g_h_q**2
    if det <= EXTEND_DET_RTOL * gg * q_h_q:
        raise DegenerateBasisError(
            "new gradient adds no direction: converged or degenerate state"
        )
    beta = -gg * q_h_q / det
    gamma = gg * g_h_q / det
    direction = beta * g_hat + gamma * q_prev
    return StepExtension(newton_prev + direction, beta, gamma, direction)
