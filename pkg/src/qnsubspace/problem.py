"""Strictly convex quadratic problems with controlled spectrum and Krylov structure.

The objective is f(x) = x'Hx/2 + c'x with H symmetric positive definite, so
the gradient is g(x) = Hx + c and the unique minimizer solves Hx + c = 0.
Everything downstream (baselines, subspace steps, the arbitrary-step method)
is exercised against instances built here, whose Krylov grade is known by
construction.
"""

import json
import warnings

import numpy as np
from numpy.linalg import norm
from scipy.linalg import cho_factor, cho_solve

from .errors import DimensionMismatchError, NotPositiveDefiniteError

MAX_DIMENSION = 512

# Rank tolerance for grade detection, applied to candidates H v with ||v|| = 1:
# a new Krylov vector whose component outside the current span is at most
# RANK_RTOL * max(1, ||H||_1) is treated as dependent.
RANK_RTOL = 1e-10

# Spectra wider than this get flagged: angle and equality tolerances in the
# test suites are calibrated for condition numbers below it.
ILL_CONDITIONED = 1e8


class QuadraticProblem:
    """Immutable instance of min x'Hx/2 + c'x with H symmetric positive definite.

    H and c are copied and frozen at construction. Symmetry is enforced by
    averaging with the transpose after a tolerance check, and positive
    definiteness is verified with a Cholesky factorization whose factor is
    cached for :meth:`solution`.
    """

    def __init__(self, H, c):
        H = np.array(H, dtype=float)
        c = np.array(c, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise DimensionMismatchError(f"H must be square, got shape {H.shape}")
        n = H.shape[0]
        if c.shape != (n,):
            raise DimensionMismatchError(
                f"c must have shape ({n},), got {c.shape}"
            )
        if n > MAX_DIMENSION:
            raise ValueError(f"dimension {n} exceeds the supported cap {MAX_DIMENSION}")
        scale = max(1.0, float(np.abs(H).max()))
        asym = float(np.abs(H - H.T).max())
        if asym > 1e-12 * scale:
            raise ValueError(f"H is not symmetric (max asymmetry {asym:.3e})")
        H = 0.5 * (H + H.T)
        try:
            self._chol = cho_factor(H, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "H is not positive definite"
            ) from exc
        H.setflags(write=False)
        c.setflags(write=False)
        self._H = H
        self._c = c

    @property
    def n(self):
        return self._H.shape[0]

    @property
    def H(self):
        return self._H

    @property
    def c(self):
        return self._c

    def _check_vector(self, x, name="x"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatchError(
                f"{name} must have shape ({self.n},), got {x.shape}"
            )
        return x

    def gradient(self, x):
        """g(x) = Hx + c."""
        x = self._check_vector(x)
        return self._H @ x + self._c

    def objective(self, x):
        """f(x) = x'Hx/2 + c'x."""
        x = self._check_vector(x)
        return 0.5 * float(x @ (self._H @ x)) + float(self._c @ x)

    def hessian_action(self, v):
        """Hv. The curvature oracle handed to routines that never factor H."""
        v = self._check_vector(v, name="v")
        return self._H @ v

    def solution(self):
        """The unique minimizer, solving Hx + c = 0 via the cached Cholesky factor.

        One step of iterative refinement keeps the residual well below
        1e-10 * (1 + ||c||) even for poorly scaled spectra.
        """
        x = cho_solve(self._chol, -self._c)
        x += cho_solve(self._chol, -(self._H @ x + self._c))
        return x

    def condition_number(self):
        """Spectral condition number, computed from the eigenvalues."""
        w = np.linalg.eigvalsh(self._H)
        return float(w[-1] / w[0])


class KrylovOracle:
    """Reference for the space spanned by {g0, Hg0, H^2 g0, ...}.

    The space is determined by which eigenvalues of H the initial gradient
    touches: its dimension (the grade) is the number of distinct eigenvalues
    carrying a nonnegligible component of g0, and the space itself lives
    inside the span of those components. Working in that invariant subspace
    keeps the construction stable; building the basis by repeated
    H-application in full coordinates would exponentially amplify rounding
    noise along any dominant untouched eigendirection and overestimate the
    grade.

    Within the touched span H acts diagonally, so the power basis comes from
    an exact scalar recurrence with full reorthogonalization, and minimizers
    of f over x0 + (k-dimensional span) come from a small projected solve.
    """

    def __init__(self, prob, x0=None):
        self.problem = prob
        if x0 is None:
            x0 = np.zeros(prob.n)
        self.origin = prob._check_vector(x0, name="x0")
        g0 = prob.gradient(self.origin)
        self._g0 = g0
        g0_norm = norm(g0)

        mu, weights, axes = [], [], []
        if g0_norm > 0.0:
            evals, evecs = np.linalg.eigh(prob.H)
            cluster_tol = RANK_RTOL * max(1.0, norm(prob.H, 1))
            i = 0
            while i < prob.n:
                j = i + 1
                while j < prob.n and evals[j] - evals[j - 1] <= cluster_tol:
                    j += 1
                block = evecs[:, i:j]
                component = block @ (block.T @ g0)
                weight = norm(component)
                if weight > RANK_RTOL * g0_norm:
                    mu.append(float(np.mean(evals[i:j])))
                    weights.append(weight)
                    axes.append(component / weight)
                i = j

        r = len(mu)
        self._mu = np.asarray(mu)
        self._w = np.asarray(weights)
        self._axes = (
            np.column_stack(axes) if axes else np.zeros((prob.n, 0))
        )

        # power basis of the touched span, in its exact diagonal coordinates
        columns = []
        if r:
            tol = RANK_RTOL * max(1.0, norm(prob.H, 1))
            v = self._w / norm(self._w)
            for _ in range(r):
                columns.append(v)
                t = self._mu * v
                for _ in range(2):
                    for u in columns:
                        t = t - (u @ t) * u
                res = norm(t)
                if res <= tol:
                    break
                v = t / res
        self._power = (
            np.column_stack(columns) if columns else np.zeros((r, 0))
        )
        self.grade = self._power.shape[1]
        self.basis = self._axes @ self._power
        self.basis.setflags(write=False)

    def minimizer(self, k):
        """Minimizer of f over x0 + span of the first k basis vectors."""
        if not 0 <= k <= self.grade:
            raise ValueError(f"k must lie in [0, {self.grade}], got {k}")
        if k == 0:
            return self.origin.copy()
        Z = self._power[:, :k]
        A = Z.T @ (self._mu[:, None] * Z)
        y = cho_solve(cho_factor(A, lower=True), -(Z.T @ self._w))
        return self.origin + self._axes @ (Z @ y)

    def minimizer_gradient(self, k):
        """Gradient at :meth:`minimizer`; orthogonal to the first k basis vectors."""
        return self.problem.gradient(self.minimizer(k))

    def conjugate_direction(self, k):
        """Difference of consecutive constrained minimizers, for 0 <= k < grade.

        These differences are mutually H-conjugate and each is the unit-step
        exact-line-search move between the consecutive minimizers.
        """
        if not 0 <= k < self.grade:
            raise ValueError(f"k must lie in [0, {self.grade}), got {k}")
        return self.minimizer(k + 1) - self.minimizer(k)


def krylov_grade(prob, x0=None):
    """Grade of the space generated by the initial gradient: first k where it stops growing."""
    return KrylovOracle(prob, x0).grade


def krylov_minimizer(prob, x0, k):
    """Minimizer of f over x0 + (k-dimensional gradient-generated span)."""
    return KrylovOracle(prob, x0).minimizer(k)


def _haar_orthogonal(n, rng):
    """Random orthogonal matrix from Householder-based QR of a Gaussian draw."""
    A = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def generate_problem(n, grade=None, *, eigenvalues=None, cond=None, seed=0):
    """Build a random instance with prescribed spectrum and known grade.

    Parameters
    ----------
    n : int
        Dimension, at most 512.
    grade : int, optional
        Number of distinct eigenvalues the initial gradient touches. Defaults
        to the number of distinct eigenvalues. Must not exceed it.
    eigenvalues : array_like, optional
        Explicit positive spectrum of length n. Mutually exclusive with cond.
    cond : float, optional
        Target condition number; eigenvalues are log-spaced in [1, cond].
    seed : int
        Seeds all randomness; identical seeds reproduce H and c bit for bit.

    Returns
    -------
    (QuadraticProblem, ndarray)
        The instance and the start point (the origin). The initial gradient
        then equals c, built with nonzero components along exactly ``grade``
        eigendirections of distinct eigenvalue, which forces that grade.
    """
    if (eigenvalues is None) == (cond is None):
        raise ValueError("exactly one of eigenvalues and cond must be given")
    if eigenvalues is not None:
        lam = np.sort(np.asarray(eigenvalues, dtype=float))
        if lam.shape != (n,):
            raise ValueError(f"eigenvalues must have length {n}")
    else:
        if cond < 1.0:
            raise ValueError("cond must be at least 1")
        lam = np.geomspace(1.0, float(cond), n) if n > 1 else np.ones(1)
    if lam[0] <= 0.0:
        raise ValueError("eigenvalues must be positive")
    if lam[-1] / lam[0] > ILL_CONDITIONED:
        warnings.warn(
            f"condition number {lam[-1] / lam[0]:.2e} exceeds {ILL_CONDITIONED:.0e}; "
            "tolerance calibrations may not hold",
            stacklevel=2,
        )

    # first index of each run of equal eigenvalues in the sorted spectrum
    distinct_starts = [0] + [i for i in range(1, n) if lam[i] != lam[i - 1]]
    if grade is None:
        grade = len(distinct_starts)
    if not 1 <= grade <= len(distinct_starts):
        raise ValueError(
            f"grade {grade} must lie in [1, {len(distinct_starts)}], the number "
            "of distinct eigenvalues"
        )

    rng = np.random.default_rng(seed)
    Q = _haar_orthogonal(n, rng)
    H = Q @ np.diag(lam) @ Q.T

    chosen = rng.choice(len(distinct_starts), size=grade, replace=False)
    chosen.sort()
    weights = rng.uniform(0.5, 1.5, size=grade) * rng.choice([-1.0, 1.0], size=grade)
    c = np.zeros(n)
    for w, gi in zip(weights, chosen):
        c += w * Q[:, distinct_starts[gi]]

    return QuadraticProblem(H, c), np.zeros(n)


def problem_to_dict(prob, x0=None, seed=None, spec=None):
    """JSON-ready form: H flattened row-major, vectors as float lists."""
    if x0 is None:
        x0 = np.zeros(prob.n)
    x0 = prob._check_vector(x0, name="x0")
    return {
        "n": prob.n,
        "H": [float(v) for v in prob.H.ravel(order="C")],
        "c": [float(v) for v in prob.c],
        "x0": [float(v) for v in x0],
        "seed": seed,
        "spec": spec,
    }


def problem_from_dict(d):
    """Inverse of :func:`problem_to_dict`. Returns (problem, x0, meta)."""
    n = int(d["n"])
    H = np.asarray(d["H"], dtype=float)
    if H.shape != (n * n,):
        raise ValueError(f"H must hold {n * n} row-major entries, got {H.shape[0]}")
    prob = QuadraticProblem(H.reshape(n, n), np.asarray(d["c"], dtype=float))
    x0 = np.asarray(d.get("x0") if d.get("x0") is not None else np.zeros(n), dtype=float)
    meta = {"seed": d.get("seed"), "spec": d.get("spec")}
    return prob, x0, meta


def save_problem(path, prob, x0=None, seed=None, spec=None):
    with open(path, "w") as fh:
        json.dump(problem_to_dict(prob, x0, seed=seed, spec=spec), fh, indent=2,
                  sort_keys=True)
        fh.write("\n")


def load_problem(path):
    with open(path) as fh:
        return problem_from_dict(json.load(fh))
