"""Quasi-Newton subspace iteration with arbitrary nonzero step sizes.

Each iteration solves B p = -g, moves by any nonzero step length alpha along
p, then rebuilds B to copy the Hessian on the two directions that matter: the
newest conjugate direction q (the part of p outside the previous restricted
Newton step) and the updated restricted Newton step itself. Both the Newton
step and its Hessian image obey closed-form recursions, so the whole loop can
run matrix-free on gradient differences alone.

Finite termination does not need exact line search: once the generated
subspace reaches its grade r, every direction is the full Newton step, and
taking a unit step at any iteration k >= r lands exactly on the minimizer.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.linalg import norm

from .approximation import (
    COLLAPSE_WARN_BAND,
    SpanApprox,
    build_two_vector,
    newton_sigma,
    solve_direction,
)
from .errors import DegenerateBasisError, NotPositiveDefiniteError, PolicyError
from .trace import BREAKDOWN, CONVERGED, MAX_ITER, IterateRecord, IterateTrace
from .util import cosine_alignment

ORACLE = "oracle"
MATRIX_FREE = "matrix-free"

# Steps sampled at random keep away from zero by at least this much.
MIN_RANDOM_STEP = 0.05

# ||p - newton_prev|| below this fraction of the trajectory scale means the
# generated subspace is complete: the solve returned the restricted Newton
# step itself and any leftover difference is rounding noise. The scale must
# be the overall trajectory's, not the current step's: near the end both p
# and the Newton step are tiny while the noise floor of their difference is
# set by the problem-sized quantities they were computed from. The floor
# sits between that noise ceiling (the solve amplifies the correction's
# accumulated rounding by the top curvature over sigma, observed up to 2e-9
# of scale at condition 1e2 on long random-step runs) and the smallest
# genuine direction a resolvable spectrum produces (1e-3 of scale and up).
# Missing the trigger is far costlier than firing one step early: a noise
# direction admitted to memory pollutes every later solve.
EXHAUSTED_RTOL = 1e-8

# Relative floor for q'Hq against ||q|| ||Hq||; below it the curvature along
# q is numerically degenerate.
CURVATURE_RTOL = 1e-14


@dataclass
class _StepContext:
    """What a step policy may look at before the step is taken."""

    x: np.ndarray
    g: np.ndarray
    p: np.ndarray
    h_probe: object  # callable v -> Hv

    def exact_step(self):
        h_p = self.h_probe(self.p)
        curv = float(self.p @ h_p)
        if curv <= 0.0:
            raise NotPositiveDefiniteError(
                f"search direction has nonpositive curvature p'Hp = {curv:.3e}"
            )
        return -float(self.g @ self.p) / curv


@dataclass
class _SigmaContext:
    """Post-step state available when the complement scaling is chosen."""

    q: np.ndarray
    h_q: np.ndarray
    newton_step: np.ndarray
    h_newton_step: np.ndarray
    g_next: np.ndarray
    h_probe: object
    exhausted: bool

    def newton_value(self):
        """The unique scaling that makes the next solve a full Newton step.

        Reconstructs the gradient at the current constrained minimizer from
        tracked state (g_hat = g_next + H pN), forms the upcoming conjugate
        direction with unit coefficient on -g_hat, and applies the closed
        form -q'Hq / q'g at the new point. Before the first step there is no
        previous direction and the upcoming one is -g itself.
        """
        if self.exhausted:
            raise DegenerateBasisError(
                "subspace already complete: no scaling changes the step"
            )
        g_hat = self.g_next + self.h_newton_step
        if norm(self.q) == 0.0:
            q_up = -g_hat
            h_q_up = -self.h_probe(g_hat)
        else:
            q_h_q = float(self.q @ self.h_q)
            if q_h_q <= 0.0:
                raise NotPositiveDefiniteError("degenerate curvature along q")
            coef = float(g_hat @ self.h_q) / q_h_q
            q_up = -g_hat + coef * self.q
            h_q_up = -self.h_probe(g_hat) + coef * self.h_q
        return newton_sigma(q_up, h_q_up, self.g_next)


@dataclass(frozen=True)
class StepPolicy:
    """Step length rule. Never emits zero.

    kinds: "unit", "constant", "uniform" (random in [lo, hi] rejecting
    |alpha| < 0.05), "exact" (exact line search), "schedule" (fixed list),
    "unit-after" (random before iteration ``start``, one from it onward).
    """

    kind: str
    value: float | None = None
    lo: float = 0.1
    hi: float = 2.0
    values: tuple = ()
    start: int = 0

    @classmethod
    def unit(cls):
        return cls(kind="unit")

    @classmethod
    def constant(cls, value):
        if value == 0.0:
            raise PolicyError("constant step must be nonzero")
        return cls(kind="constant", value=float(value))

    @classmethod
    def uniform(cls, lo=0.1, hi=2.0):
        if hi <= lo:
            raise PolicyError(f"empty step range [{lo}, {hi}]")
        if max(abs(lo), abs(hi)) < MIN_RANDOM_STEP:
            raise PolicyError(
                f"range [{lo}, {hi}] lies entirely inside the rejected band "
                f"(-{MIN_RANDOM_STEP}, {MIN_RANDOM_STEP})"
            )
        return cls(kind="uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def exact_line_search(cls):
        return cls(kind="exact")

    @classmethod
    def schedule(cls, values):
        values = tuple(float(v) for v in values)
        if not values:
            raise PolicyError("schedule must not be empty")
        if any(v == 0.0 for v in values):
            raise PolicyError("schedule contains a zero step")
        return cls(kind="schedule", values=values)

    @classmethod
    def unit_after(cls, start, lo=0.1, hi=2.0):
        if start < 0:
            raise PolicyError("start iteration must be nonnegative")
        base = cls.uniform(lo, hi)  # validates the range
        return cls(kind="unit-after", start=int(start), lo=base.lo, hi=base.hi)

    def _draw(self, rng):
        for _ in range(1000):
            a = float(rng.uniform(self.lo, self.hi))
            if abs(a) >= MIN_RANDOM_STEP:
                return a
        raise PolicyError("could not draw a step outside the rejected band")

    def alpha(self, k, ctx, rng):
        if self.kind == "unit":
            a = 1.0
        elif self.kind == "constant":
            a = self.value
        elif self.kind == "uniform":
            a = self._draw(rng)
        elif self.kind == "exact":
            a = ctx.exact_step()
        elif self.kind == "schedule":
            if k >= len(self.values):
                raise PolicyError(f"step schedule exhausted at iteration {k}")
            a = self.values[k]
        elif self.kind == "unit-after":
            a = 1.0 if k >= self.start else self._draw(rng)
        else:
            raise PolicyError(f"unknown step policy kind {self.kind!r}")
        if a == 0.0:
            raise PolicyError(f"step policy produced zero at iteration {k}")
        return a

    def spec(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = self.value
        elif self.kind == "uniform":
            d.update(lo=self.lo, hi=self.hi)
        elif self.kind == "schedule":
            d["values"] = list(self.values)
        elif self.kind == "unit-after":
            d.update(start=self.start, lo=self.lo, hi=self.hi)
        return d

    def descriptor(self):
        if self.kind == "constant":
            return f"constant[{self.value:g}]"
        if self.kind == "uniform":
            return f"uniform[{self.lo:g}:{self.hi:g}]"
        if self.kind == "schedule":
            return "schedule[" + ":".join(f"{v:g}" for v in self.values) + "]"
        if self.kind == "unit-after":
            return f"unit-after[{self.start}]"
        return self.kind


@dataclass(frozen=True)
class SigmaPolicy:
    """Complement scaling rule. Always emits a positive value.

    kinds: "constant", "uniform" (random in [lo, hi], lo > 0), "newton-at"
    (the unique termination-forcing value at iteration ``at``, possibly
    rescaled by ``scale``; ``default`` elsewhere). ``at = -1`` scales the
    identity the run starts from.
    """

    kind: str
    value: float = 1.0
    lo: float = 0.5
    hi: float = 2.0
    at: int | None = None
    scale: float = 1.0
    default: float = 1.0

    @classmethod
    def constant(cls, value=1.0):
        if value <= 0.0:
            raise PolicyError("sigma must be positive")
        return cls(kind="constant", value=float(value))

    @classmethod
    def uniform(cls, lo=0.5, hi=2.0):
        if lo <= 0.0 or hi <= lo:
            raise PolicyError(f"invalid sigma range [{lo}, {hi}]")
        return cls(kind="uniform", lo=float(lo), hi=float(hi))

    @classmethod
    def newton_at(cls, at, scale=1.0, default=1.0):
        if scale <= 0.0 or default <= 0.0:
            raise PolicyError("scale and default sigma must be positive")
        return cls(kind="newton-at", at=int(at), scale=float(scale),
                   default=float(default))

    def sigma(self, k, ctx, rng):
        if self.kind == "constant":
            s = self.value
        elif self.kind == "uniform":
            s = float(rng.uniform(self.lo, self.hi))
        elif self.kind == "newton-at":
            s = self.scale * ctx.newton_value() if k == self.at else self.default
        else:
            raise PolicyError(f"unknown sigma policy kind {self.kind!r}")
        if s <= 0.0:
            raise PolicyError(f"sigma policy produced {s} at iteration {k}")
        return s

    def spec(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["value"] = self.value
        elif self.kind == "uniform":
            d.update(lo=self.lo, hi=self.hi)
        elif self.kind == "newton-at":
            d.update(at=self.at, scale=self.scale, default=self.default)
        return d

    def descriptor(self):
        if self.kind == "constant":
            return f"constant[{self.value:g}]"
        if self.kind == "uniform":
            return f"uniform[{self.lo:g}:{self.hi:g}]"
        if self.kind == "newton-at":
            tag = f"newton-at[{self.at}]"
            if self.scale != 1.0:
                tag += f"*{self.scale:g}"
            return tag
        return self.kind


@dataclass
class LearnedAction:
    """Hessian images recovered from one step's gradient difference."""

    h_p: np.ndarray
    h_q: np.ndarray
    h_newton_next: np.ndarray
    coef: float


def learn_h_action(g_next, g_curr, alpha, h_newton_prev, q):
    """Recover Hessian images from gradients alone, for one iteration.

    On a quadratic the step from x to x + alpha p gives Hp exactly as
    (g_next - g_curr) / alpha. Linearity then yields Hq = Hp - H pN_prev,
    and the Hessian image of the updated restricted Newton step follows the
    same recursion as the step itself:

        H pN_next = (1 - alpha) H pN_prev - (g'q / q'Hq + alpha) Hq

    Returns the images together with the shared recursion coefficient.
    """
    alpha = float(alpha)
    if alpha == 0.0:
        raise PolicyError("cannot learn from a zero step")
    g_next = np.asarray(g_next, dtype=float)
    g_curr = np.asarray(g_curr, dtype=float)
    h_newton_prev = np.asarray(h_newton_prev, dtype=float)
    q = np.asarray(q, dtype=float)
    h_p = (g_next - g_curr) / alpha
    h_q = h_p - h_newton_prev
    q_h_q = float(q @ h_q)
    if q_h_q <= 0.0:
        raise NotPositiveDefiniteError(
            f"learned curvature q'Hq = {q_h_q:.3e} is not positive"
        )
    coef = float(g_curr @ q) / q_h_q + alpha
    h_newton_next = (1.0 - alpha) * h_newton_prev - coef * h_q
    return LearnedAction(h_p, h_q, h_newton_next, coef)


def _identity_approx(n, sigma):
    return SpanApprox(np.zeros((n, 0)), np.zeros((n, 0)), sigma)


def subspace_qn_solve(prob, x0, steps=None, sigmas=None, mode=ORACLE,
                      tol=1e-9, max_iter=None, seed=0, initial_sigma=None):
    """Run the arbitrary-step method on a quadratic problem.

    Parameters
    ----------
    prob : QuadraticProblem
    x0 : ndarray
        Start point.
    steps : StepPolicy
        Step length rule (default unit steps).
    sigmas : SigmaPolicy
        Complement scaling rule (default constant 1).
    mode : str
        "oracle" applies H directly; "matrix-free" recovers every Hessian
        image in the recursion from gradient differences via
        :func:`learn_h_action`.
    tol : float
        Terminate once ||g|| <= tol * (1 + ||g0||).
    max_iter : int, optional
        Step budget, default n + 5.
    seed : int or tuple of int
        Seeds the policies' random draws; fully determines the run.
    initial_sigma : float, optional
        Scale of the identity the run starts from. A newton-at(-1) sigma
        policy overrides this with the computed value.

    Returns
    -------
    IterateTrace
        One record per step plus the terminal status: converged(iterations),
        max-iter, or breakdown(reason).
    """
    steps = steps if steps is not None else StepPolicy.unit()
    sigmas = sigmas if sigmas is not None else SigmaPolicy.constant(1.0)
    if mode not in (ORACLE, MATRIX_FREE):
        raise ValueError(f"unknown mode {mode!r}")
    x = prob._check_vector(x0, name="x0")
    if max_iter is None:
        max_iter = prob.n + 5

    ss = np.random.SeedSequence(seed)
    rng_step, rng_sigma = (np.random.default_rng(s) for s in ss.spawn(2))

    def h_probe_at(x_ref, g_ref):
        if mode == ORACLE:
            return prob.hessian_action
        # one extra gradient evaluation per probe; exact on a quadratic
        return lambda v: prob.gradient(x_ref + v) - g_ref

    g = prob.gradient(x)
    g0_norm = norm(g)
    threshold = tol * (1.0 + g0_norm)

    n = prob.n
    newton_step = np.zeros(n)
    h_newton = np.zeros(n)

    sigma_init = 1.0 if initial_sigma is None else float(initial_sigma)
    if sigmas.kind == "newton-at" and sigmas.at == -1 and g0_norm > 0.0:
        start_ctx = _SigmaContext(
            q=np.zeros(n), h_q=np.zeros(n), newton_step=newton_step,
            h_newton_step=h_newton, g_next=g, h_probe=h_probe_at(x, g),
            exhausted=False,
        )
        sigma_init = sigmas.sigma(-1, start_ctx, rng_sigma)
    if sigma_init <= 0.0:
        raise PolicyError("initial sigma must be positive")

    trace = IterateTrace(meta={
        "method": "qn-subspace",
        "mode": mode,
        "tol": tol,
        "max_iter": max_iter,
        "seed": list(seed) if isinstance(seed, (tuple, list)) else seed,
        "step_policy": steps.spec(),
        "sigma_policy": sigmas.spec(),
        "initial_sigma": sigma_init,
    })

    if g0_norm <= threshold:
        trace.status = CONVERGED
        trace.final_x = x
        trace.final_grad_norm = float(g0_norm)
        return trace

    B = _identity_approx(n, sigma_init)

    def finish(status, x_end, g_end, reason=""):
        trace.status = status
        trace.iterations = len(trace.records)
        trace.reason = reason
        trace.final_x = x_end
        trace.final_grad_norm = float(norm(g_end))
        return trace

    span_complete = False

    for k in range(max_iter):
        if span_complete:
            # With the span complete the solve returns the stored correction
            # identically, but evaluating it through the operator would push
            # the correction's tiny directional error through the off-span
            # part of B, scaling it by the top curvature over sigma at every
            # pass. Use the stored value: its error only contracts from here.
            p = newton_step.copy()
        else:
            p = solve_direction(B, g)
        probe = h_probe_at(x, g)
        alpha = steps.alpha(k, _StepContext(x=x, g=g, p=p, h_probe=probe), rng_step)
        x_next = x + alpha * p
        g_next = prob.gradient(x_next)

        q_raw = p - newton_step
        trajectory_scale = 1.0 + norm(x) + norm(p) + norm(newton_step)
        exhausted = bool(norm(q_raw) <= EXHAUSTED_RTOL * trajectory_scale)

        if mode == MATRIX_FREE:
            h_p = (g_next - g) / alpha
        else:
            h_p = prob.hessian_action(p)

        record = IterateRecord(
            k=k, x=x, g=g, p=p, alpha=alpha, grad_norm=float(norm(g)),
            h_p=h_p, exhausted=exhausted,
        )
        trace.records.append(record)

        if exhausted:
            # the solve reproduced the restricted Newton step: the subspace
            # is complete and no new conjugate direction exists. Updating by
            # the move actually taken (rather than scaling the stored value
            # by 1 - alpha, identical in exact arithmetic) keeps the solve's
            # one-time rounding out of the stored correction.
            span_complete = True
            q = np.zeros(n)
            h_q = np.zeros(n)
            newton_next = newton_step - alpha * p
            h_newton_next = h_newton - alpha * h_p
            if mode == ORACLE:
                h_newton_next = prob.hessian_action(newton_next)
        else:
            q = q_raw
            if mode == MATRIX_FREE:
                h_q = h_p - h_newton
            else:
                h_q = prob.hessian_action(q)
            q_h_q = float(q @ h_q)
            if q_h_q <= CURVATURE_RTOL * norm(q) * norm(h_q):
                if norm(g_next) <= threshold:
                    record.q = q
                    record.h_q = h_q
                    return finish(CONVERGED, x_next, g_next)
                return finish(
                    BREAKDOWN, x_next, g_next,
                    reason=f"degenerate curvature q'Hq = {q_h_q:.3e} with "
                           "gradient above tolerance",
                )
            coef = float(g @ q) / q_h_q + alpha
            newton_next = (1.0 - alpha) * newton_step - coef * q
            if mode == MATRIX_FREE:
                h_newton_next = (1.0 - alpha) * h_newton - coef * h_q
            else:
                h_newton_next = prob.hessian_action(newton_next)

        record.q = q
        record.h_q = h_q
        record.newton_step = newton_next
        record.h_newton_step = h_newton_next

        if norm(g_next) <= threshold:
            return finish(CONVERGED, x_next, g_next)

        sigma_ctx = _SigmaContext(
            q=q, h_q=h_q, newton_step=newton_next, h_newton_step=h_newton_next,
            g_next=g_next, h_probe=h_probe_at(x_next, g_next),
            exhausted=exhausted,
        )
        try:
            sigma = sigmas.sigma(k, sigma_ctx, rng_sigma)
        except DegenerateBasisError as exc:
            sigma = sigmas.default if sigmas.kind == "newton-at" else 1.0
            trace.warnings.append(
                f"iteration {k}: sigma policy fell back to {sigma:g} ({exc})"
            )

        if exhausted:
            if norm(newton_next) == 0.0:
                return finish(
                    BREAKDOWN, x_next, g_next,
                    reason="no direction information left while the gradient "
                           "is above tolerance",
                )
            P = newton_next[:, None]
            HP = h_newton_next[:, None]
            B = SpanApprox(P, HP, sigma)
            record.collapsed = True
        else:
            align_gap = 1.0 - cosine_alignment(newton_next, q)
            if COLLAPSE_WARN_BAND[0] <= align_gap <= COLLAPSE_WARN_BAND[1]:
                trace.warnings.append(
                    f"iteration {k}: Newton step and conjugate direction are "
                    f"nearly parallel (1 - |cos| = {align_gap:.3e})"
                )
            B = build_two_vector(newton_next, h_newton_next, q, h_q, sigma)
            record.collapsed = bool(B.rank == 1)
        record.sigma = sigma

        x, g = x_next, g_next
        newton_step, h_newton = newton_next, h_newton_next

    return finish(MAX_ITER, x, g)
