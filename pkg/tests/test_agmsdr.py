import math

import numpy as np
import pytest

from accelmin.agmsdr import (
    agmsdr_step_known_L,
    agmsdr_step_linesearch,
    init_state,
    lemma1_certificate,
    local_lipschitz_estimate,
    run_agmsdr,
)
from accelmin.core import InvalidBound, StoppingRule, solve_sufficient_decrease
from accelmin.problems import QuadraticProblem, desk_eot_instance

from conftest import HalfQuadOracle


def random_spd_quadratic(dim, lo, hi, seed):
    """||W z - b||^2 with W spectrum in [lo, hi] (exact)."""
    rng = np.random.default_rng(seed)
    Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
    Q = Q * np.sign(np.diag(R))
    W = (Q * np.linspace(lo, hi, dim)) @ Q.T
    return QuadraticProblem(W, rng.standard_normal(dim))


def test_known_L_one_exact_step_on_identity():
    # f = 0.5 ||z||^2, L = 1: first step lands on the minimizer
    p = HalfQuadOracle(np.eye(2))
    state = init_state(p, np.array([1.0, 0.0]))
    state, rec = agmsdr_step_known_L(state, p, L=1.0)
    np.testing.assert_allclose(state.y, [1.0, 0.0])  # y = x0 since v0 = x0
    np.testing.assert_allclose(state.x, 0.0, atol=1e-15)
    assert rec.a_k == pytest.approx(1.0)
    assert rec.A_k == pytest.approx(1.0)


def test_known_L_rate_envelope_diag():
    p = HalfQuadOracle(np.diag([1.0, 10.0]), np.array([1.0, 1.0]))
    x0 = np.zeros(2)
    L = 10.0
    x_star = p.solution()
    f_star = p.f_star()
    R2 = float((x0 - x_star) @ (x0 - x_star))
    _, trace = run_agmsdr(p, x0, variant="known_L", L=L, max_iters=50)
    for rec in trace:
        assert rec.f_val - f_star <= 2.0 * L * R2 / rec.k ** 2 * (1 + 1e-6) + 1e-12


def test_linesearch_one_step_identity():
    p = HalfQuadOracle(np.eye(2))
    state = init_state(p, np.array([3.0, -1.0]))
    state, rec = agmsdr_step_linesearch(state, p)
    np.testing.assert_allclose(state.x, 0.0, atol=1e-8)


def test_recovered_coefficient_identity():
    # when delta = g^2/(2L) exactly, the recovered a satisfies a^2/(A+a) = 1/L
    for A, L, g2 in [(0.0, 1.0, 1.0), (2.5, 4.0, 3.0), (10.0, 0.5, 7.0)]:
        delta = g2 / (2.0 * L)
        a = solve_sufficient_decrease(A, 1.0, 0.0, g2, 0.0, delta)
        assert a * a / (A + a) == pytest.approx(1.0 / L, rel=1e-10)


def test_monotone_chain_on_eot():
    p = desk_eot_instance(16, 1.0, seed=1, cost_scale=30.0)
    state = init_state(p, np.zeros(p.dim))
    f_prev = state.f_x
    for _ in range(25):
        state, rec = agmsdr_step_linesearch(state, p)
        if rec is None:
            break
        with p.paused_counters():
            f_y = p.value(state.y)
        tol = 1e-12 * max(1.0, abs(f_prev))
        assert state.f_x <= f_y + tol
        assert f_y <= f_prev + tol
        f_prev = state.f_x


def test_local_lipschitz_estimate_basics():
    assert local_lipschitz_estimate(0.0, 1.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        local_lipschitz_estimate(1.0, 0.0)


def test_known_L_gives_exact_L_hat():
    p = random_spd_quadratic(6, 1.0, 3.0, 0)
    _, trace = run_agmsdr(p, np.zeros(6), variant="known_L", L=p.known_L,
                          max_iters=20)
    for rec in trace:
        assert rec.L_hat == pytest.approx(p.known_L, rel=1e-12)


def test_linesearch_L_hat_within_spectrum():
    # L_hat = g^2 / (2 delta) is a Rayleigh quotient of the Hessian on
    # quadratics, valid while the per-step decrease is above floating-point
    # noise (once delta ~ 1e-15 the estimate is noise-dominated).
    p = HalfQuadOracle(np.diag([1.0, 10.0]), np.array([2.0, 3.0]))
    _, trace = run_agmsdr(p, np.zeros(2), variant="linesearch", max_iters=30)
    meaningful = [rec for rec in trace if rec.grad_norm_sq > 1e-8]
    assert len(meaningful) >= 5
    for rec in meaningful:
        assert 1.0 - 1e-6 <= rec.L_hat <= 10.0 + 1e-6


def test_lemma1_certificate_vacuous_at_mu_zero():
    p = random_spd_quadratic(5, 1.0, 2.0, 1)
    _, trace = run_agmsdr(p, np.zeros(5), variant="linesearch", max_iters=10)
    bounds = lemma1_certificate(trace, 0.0, 7.0, 3.0)
    np.testing.assert_allclose(bounds, 4.0)


def test_lemma1_certificate_single_factor():
    p = HalfQuadOracle(np.eye(3), np.array([1.0, 0.0, 2.0]))
    _, trace = run_agmsdr(p, np.zeros(3), variant="known_L", L=1.0, max_iters=1)
    f0 = 0.0
    bounds = lemma1_certificate(trace, 0.5, f0, p.f_star())
    expected = (1.0 - 0.5 / 1.0) * (f0 - p.f_star())
    assert bounds[0] == pytest.approx(expected, rel=1e-12)


def test_lemma1_certificate_strongly_convex_run():
    p = random_spd_quadratic(30, 1.0, 5.0, 2)
    x0 = np.zeros(30)
    f0 = p.value(x0)
    f_star = p.f_star()
    _, trace = run_agmsdr(p, x0, variant="linesearch", max_iters=40)
    bounds = lemma1_certificate(trace, p.known_mu, f0, f_star)
    for rec, bound in zip(trace, bounds):
        assert rec.f_val - f_star <= bound * (1 + 1e-6) + 1e-12


def test_lemma1_invalid_factor():
    p = random_spd_quadratic(5, 1.0, 2.0, 3)
    _, trace = run_agmsdr(p, np.zeros(5), variant="linesearch", max_iters=5)
    with pytest.raises(InvalidBound):
        lemma1_certificate(trace, 1e9, 1.0, 0.0)  # mu above every L_hat


def test_run_starts_at_minimizer():
    p = HalfQuadOracle(np.diag([1.0, 4.0]), np.array([1.0, 2.0]))
    x_star = p.solution()
    x, trace = run_agmsdr(p, x_star, variant="linesearch")
    assert trace == []
    np.testing.assert_allclose(x, x_star)


def test_linear_convergence_factor_on_strongly_convex():
    p = random_spd_quadratic(100, 1.0, 4.0, 4)
    x0 = np.zeros(100)
    f_star = p.f_star()
    mu = p.known_mu
    _, trace = run_agmsdr(p, x0, variant="linesearch", max_iters=60)
    gap_prev = p.value(x0) - f_star
    worst_factor = 0.0
    for rec in trace:
        factor = 1.0 - mu * rec.a_k ** 2 / rec.A_k
        worst_factor = max(worst_factor, factor)
        gap = rec.f_val - f_star
        assert gap <= factor * gap_prev * (1 + 1e-6) + 1e-12
        gap_prev = gap
    assert worst_factor < 1.0


def test_estimate_sequence_invariant():
    for problem, variant, L in [
        (random_spd_quadratic(20, 1.0, 6.0, 5), "linesearch", None),
        (random_spd_quadratic(20, 1.0, 6.0, 6), "known_L", None),
        (desk_eot_instance(12, 1.0, seed=2, cost_scale=30.0), "linesearch", None),
    ]:
        L = problem.known_L if variant == "known_L" else L
        _, trace = run_agmsdr(problem, np.zeros(problem.dim), variant=variant,
                              L=L, max_iters=40)
        assert trace, "expected at least one iteration"
        for rec in trace:
            lhs = rec.A_k * rec.f_val
            assert lhs <= rec.psi_at_v + 1e-8 * max(1.0, abs(rec.psi_at_v), abs(lhs))


def test_segment_search_first_order_optimality():
    p = random_spd_quadratic(12, 1.0, 8.0, 7)
    state = init_state(p, np.zeros(12))
    tol_ls = 1e-10
    for _ in range(15):
        v_prev = state.v.copy()
        state, rec = agmsdr_step_linesearch(state, p, ls_tol=tol_ls)
        if rec is None:
            break
        with p.paused_counters():
            g = p.gradient(state.y)
        lhs = float(g @ (v_prev - state.y))
        slack = 1e-5 * np.linalg.norm(g) * (np.linalg.norm(v_prev - state.y) + 1.0)
        assert lhs >= -slack


def test_variant_equivalence_on_isotropic_quadratic():
    # for H = c I the exact ray minimizer equals the 1/L gradient step
    H = 2.0 * np.eye(4)
    c = np.array([1.0, -2.0, 0.5, 3.0])
    pa = HalfQuadOracle(H, c)
    pb = HalfQuadOracle(H, c)
    x0 = np.zeros(4)
    xa, tra = run_agmsdr(pa, x0, variant="known_L", L=2.0, max_iters=10)
    xb, trb = run_agmsdr(pb, x0, variant="linesearch", max_iters=10)
    np.testing.assert_allclose(xa, xb, atol=1e-7)
    for ra, rb in zip(tra, trb):
        assert ra.A_k == pytest.approx(rb.A_k, rel=1e-5)


def test_call_budget_stops_run():
    p = random_spd_quadratic(10, 1.0, 5.0, 8)
    _, trace = run_agmsdr(p, np.zeros(10), variant="linesearch", max_iters=100,
                          call_budget=7)
    assert trace[-1].grad_calls + trace[-1].block_min_calls <= 8


def test_known_L_requires_constant():
    p = desk_eot_instance(8, 1.0, seed=0, cost_scale=10.0)
    with pytest.raises(ValueError):
        run_agmsdr(p, np.zeros(p.dim), variant="known_L")


def test_unknown_variant_rejected():
    p = HalfQuadOracle(np.eye(2))
    with pytest.raises(ValueError):
        run_agmsdr(p, np.zeros(2), variant="nesterov")
