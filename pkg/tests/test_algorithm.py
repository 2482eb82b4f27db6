"""Arbitrary-step subspace iteration: exact hand values, recursions, policies."""

import json

import numpy as np
import pytest
from numpy.linalg import norm

from qnsubspace import (
    CONVERGED,
    MATRIX_FREE,
    MAX_ITER,
    ORACLE,
    NotPositiveDefiniteError,
    PolicyError,
    QuadraticProblem,
    SigmaPolicy,
    StepPolicy,
    generate_problem,
    learn_h_action,
    subspace_qn_solve,
    traces_match,
)

import oracles


def two_by_two():
    return QuadraticProblem(np.diag([1.0, 2.0]), np.array([-1.0, -1.0]))


def vecs(pairs):
    return [np.array([float(a), float(b)]) for a, b in pairs]


def test_unit_steps_follow_the_exact_rational_trajectory():
    ref = oracles.rational_unit_trace()
    trace = subspace_qn_solve(two_by_two(), np.zeros(2), tol=1e-12)
    assert trace.status == CONVERGED
    assert trace.iterations == 3  # grade 2 plus one
    xs, ps, qs, newtons = (vecs(ref[key]) for key in ("x", "p", "q", "newton"))
    for k, rec in enumerate(trace.records):
        assert rec.alpha == 1.0
        assert np.allclose(rec.x, xs[k], atol=1e-12)
        assert np.allclose(rec.p, ps[k], atol=1e-12)
        assert np.allclose(rec.q, qs[k], atol=1e-12)
        assert np.allclose(rec.newton_step, newtons[k], atol=1e-12)
    assert np.allclose(trace.final_x, xs[3], atol=1e-12)
    assert [rec.exhausted for rec in trace.records] == [False, False, True]
    # both memory vectors stay parallel on this trajectory
    assert [rec.collapsed for rec in trace.records] == [True, True, None]


def test_termination_scaling_lands_one_step_early():
    sigma = float(oracles.rational_newton_sigma())
    assert sigma == pytest.approx(4.0 / 3.0, abs=1e-15)
    trace = subspace_qn_solve(
        two_by_two(), np.zeros(2), sigmas=SigmaPolicy.newton_at(0), tol=1e-12,
    )
    assert trace.status == CONVERGED
    assert trace.iterations == 2  # exactly the grade
    assert trace.records[0].sigma == pytest.approx(sigma, abs=1e-12)
    assert np.allclose(trace.final_x, [1.0, 0.5], atol=1e-12)


def test_rescaled_termination_sigma_loses_the_early_finish():
    for scale in (0.9, 1.1):
        trace = subspace_qn_solve(
            two_by_two(), np.zeros(2),
            sigmas=SigmaPolicy.newton_at(0, scale=scale), tol=1e-12,
        )
        assert trace.status == CONVERGED
        assert trace.iterations == 3


def test_initial_identity_scaling():
    trace = subspace_qn_solve(two_by_two(), np.zeros(2),
                              initial_sigma=2.0, tol=1e-12)
    assert trace.meta["initial_sigma"] == 2.0
    assert np.allclose(trace.records[0].p, [0.5, 0.5], atol=1e-15)
    with pytest.raises(PolicyError):
        subspace_qn_solve(two_by_two(), np.zeros(2), initial_sigma=-1.0)


def test_start_scaling_from_the_termination_rule():
    # with no memory the upcoming direction is -g itself, so the computed
    # start scale is the Rayleigh quotient g'Hg / g'g = 3/2 here, and the
    # first unit step lands on the first constrained minimizer
    trace = subspace_qn_solve(
        two_by_two(), np.zeros(2), sigmas=SigmaPolicy.newton_at(-1), tol=1e-12,
    )
    assert trace.meta["initial_sigma"] == pytest.approx(1.5, abs=1e-14)
    assert np.allclose(trace.records[0].x + trace.records[0].p,
                       [2.0 / 3.0, 2.0 / 3.0], atol=1e-14)


def test_grade_one_problem_needs_one_step_when_tuned():
    prob, x0 = generate_problem(5, 1, cond=10.0, seed=60)
    tuned = subspace_qn_solve(prob, x0, sigmas=SigmaPolicy.newton_at(-1),
                              tol=1e-10)
    assert tuned.status == CONVERGED
    assert tuned.iterations == 1
    generic = subspace_qn_solve(prob, x0, tol=1e-10)
    assert generic.status == CONVERGED
    assert generic.iterations == 2


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_steps_reach_full_newton_at_the_grade(seed):
    prob, x0 = generate_problem(9, 5, cond=20.0, seed=70 + seed)
    x_star = prob.solution()
    trace = subspace_qn_solve(
        prob, x0, steps=StepPolicy.uniform(), sigmas=SigmaPolicy.uniform(),
        tol=1e-8, max_iter=9, seed=seed,
    )
    for rec in trace.records:
        if rec.k >= 5:
            assert rec.exhausted
            miss = norm(rec.x + rec.p - x_star)
            assert miss <= 1e-7 * (1.0 + norm(x_star))
        else:
            assert not rec.exhausted


def test_no_unit_step_means_no_termination():
    prob, x0 = generate_problem(8, 4, cond=10.0, seed=80)
    trace = subspace_qn_solve(
        prob, x0, steps=StepPolicy.uniform(), sigmas=SigmaPolicy.uniform(),
        tol=1e-9, max_iter=8, seed=3,
    )
    assert trace.status == MAX_ITER
    assert trace.iterations == 8


def test_unit_step_past_the_grade_terminates_on_the_spot():
    prob, x0 = generate_problem(8, 4, cond=15.0, seed=81)
    for k0 in (4, 5, 6):
        trace = subspace_qn_solve(
            prob, x0, steps=StepPolicy.unit_after(k0),
            sigmas=SigmaPolicy.uniform(), tol=1e-8, max_iter=k0 + 3, seed=11,
        )
        assert trace.status == CONVERGED
        assert trace.iterations == k0 + 1
        assert trace.records[-1].alpha == 1.0


def test_exact_search_recovers_classical_termination():
    prob, x0 = generate_problem(10, 6, cond=40.0, seed=82)
    trace = subspace_qn_solve(prob, x0, steps=StepPolicy.exact_line_search(),
                              tol=1e-9)
    assert trace.status == CONVERGED
    assert trace.iterations == 6
    # minimizing along each direction keeps the tracked correction at zero
    for rec in trace.records:
        scale = 1.0 + norm(rec.x) + norm(rec.p)
        assert norm(rec.newton_step) <= 1e-8 * scale


@pytest.mark.parametrize("seed", [0, 5])
def test_matrix_free_matches_oracle_field_by_field(seed):
    prob, x0 = generate_problem(8, 5, cond=25.0, seed=90 + seed)
    kw = dict(steps=StepPolicy.uniform(), sigmas=SigmaPolicy.uniform(),
              tol=1e-8, max_iter=9, seed=seed)
    a = subspace_qn_solve(prob, x0, mode=ORACLE, **kw)
    b = subspace_qn_solve(prob, x0, mode=MATRIX_FREE, **kw)
    same, mismatches = traces_match(a, b, rtol=1e-6)
    assert same, mismatches


def test_learned_action_reproduces_hessian_images():
    prob, x0 = generate_problem(7, 7, cond=12.0, seed=91)
    rng = np.random.default_rng(91)
    x = x0 + rng.standard_normal(7)
    newton_prev = rng.standard_normal(7)
    q = rng.standard_normal(7)
    p = newton_prev + q
    alpha = 0.7
    g = prob.gradient(x)
    g_next = prob.gradient(x + alpha * p)
    act = learn_h_action(g_next, g, alpha, prob.H @ newton_prev, q)
    assert np.allclose(act.h_p, prob.H @ p, atol=1e-10 * (1 + norm(prob.H @ p)))
    assert np.allclose(act.h_q, prob.H @ q, atol=1e-9 * (1 + norm(prob.H @ q)))
    coef = float(g @ q) / float(q @ prob.H @ q) + alpha
    assert act.coef == pytest.approx(coef, rel=1e-9)
    target = (1.0 - alpha) * newton_prev - coef * q
    assert np.allclose(act.h_newton_next, prob.H @ target,
                       atol=1e-9 * (1 + norm(prob.H @ target)))


def test_learned_action_guards():
    with pytest.raises(PolicyError):
        learn_h_action(np.ones(3), np.zeros(3), 0.0, np.zeros(3), np.ones(3))
    q = np.array([1.0, 0.0, 0.0])
    with pytest.raises(NotPositiveDefiniteError):
        learn_h_action(-q, np.zeros(3), 1.0, np.zeros(3), q)


def test_step_policy_validation():
    with pytest.raises(PolicyError):
        StepPolicy.constant(0.0)
    with pytest.raises(PolicyError):
        StepPolicy.uniform(2.0, 1.0)
    with pytest.raises(PolicyError):
        StepPolicy.uniform(-0.01, 0.01)  # entirely inside the rejected band
    with pytest.raises(PolicyError):
        StepPolicy.schedule([])
    with pytest.raises(PolicyError):
        StepPolicy.schedule([1.0, 0.0])
    with pytest.raises(PolicyError):
        StepPolicy.unit_after(-1)


def test_random_steps_avoid_the_zero_band():
    pol = StepPolicy.uniform(-1.0, 1.0)
    rng = np.random.default_rng(0)
    draws = [pol.alpha(k, None, rng) for k in range(500)]
    assert all(abs(a) >= 0.05 for a in draws)
    assert min(draws) < 0.0 < max(draws)


def test_schedule_policy_runs_out():
    prob, x0 = generate_problem(6, 4, cond=8.0, seed=92)
    with pytest.raises(PolicyError, match="exhausted"):
        subspace_qn_solve(prob, x0, steps=StepPolicy.schedule([0.5]),
                          tol=1e-12, max_iter=5)


def test_sigma_policy_validation():
    with pytest.raises(PolicyError):
        SigmaPolicy.constant(0.0)
    with pytest.raises(PolicyError):
        SigmaPolicy.uniform(0.0, 2.0)
    with pytest.raises(PolicyError):
        SigmaPolicy.newton_at(0, scale=0.0)


def test_policy_descriptors_and_specs():
    assert StepPolicy.unit().spec() == {"kind": "unit"}
    assert StepPolicy.uniform(0.1, 2.0).descriptor() == "uniform[0.1:2]"
    assert StepPolicy.schedule([1.0, 0.5]).spec() == {
        "kind": "schedule", "values": [1.0, 0.5]}
    assert SigmaPolicy.newton_at(3, scale=1.1).descriptor() == "newton-at[3]*1.1"
    assert SigmaPolicy.uniform(0.5, 2.0).spec() == {
        "kind": "uniform", "lo": 0.5, "hi": 2.0}


def test_sigma_fallback_past_exhaustion_warns():
    prob, x0 = generate_problem(6, 2, cond=6.0, seed=96)
    trace = subspace_qn_solve(
        prob, x0, steps=StepPolicy.constant(0.5),
        sigmas=SigmaPolicy.newton_at(3), tol=1e-10, max_iter=6,
    )
    assert any("fell back" in w for w in trace.warnings)
    assert trace.records[3].sigma == 1.0


def test_start_at_the_solution_converges_without_stepping():
    prob, x0 = generate_problem(5, 3, cond=7.0, seed=93)
    trace = subspace_qn_solve(prob, prob.solution(), tol=1e-9)
    assert trace.status == CONVERGED
    assert trace.iterations == 0
    assert trace.records == []


def test_unknown_mode_rejected():
    prob, x0 = generate_problem(4, 2, cond=5.0, seed=94)
    with pytest.raises(ValueError, match="mode"):
        subspace_qn_solve(prob, x0, mode="dense")


def test_seeded_runs_are_identical():
    prob, x0 = generate_problem(7, 4, cond=18.0, seed=95)
    kw = dict(steps=StepPolicy.uniform(), sigmas=SigmaPolicy.uniform(),
              tol=1e-8, max_iter=8)
    a = subspace_qn_solve(prob, x0, seed=(2, 7), **kw)
    b = subspace_qn_solve(prob, x0, seed=(2, 7), **kw)
    assert json.dumps(a.to_dict(), sort_keys=True) \
        == json.dumps(b.to_dict(), sort_keys=True)
    assert a.to_dict()["meta"]["seed"] == [2, 7]
    c = subspace_qn_solve(prob, x0, seed=(2, 8), **kw)
    assert c.records[0].alpha != a.records[0].alpha
