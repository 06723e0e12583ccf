"""Adaptive catalyst: an outer proximal-point loop that accelerates a
non-accelerated inner method.

Each outer step approximately minimizes the regularized objective
``F(y) = f(y) + (L/2) ||y - x||^2`` with the inner method, accepting the
inner solution once it satisfies the stopping inequality

    ||grad F(y)|| <= (L/2) ||y - x||.

The regularization weight ``L`` is searched geometrically: it is raised at
the start of every outer step and lowered while the inner iteration count
does not grow by the configured factor.  The shipped inner method is
gradient descent with a backtracking curvature estimate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .core import (
    Oracle,
    StoppingRule,
    TraceRecord,
    as_point,
)

__all__ = [
    "CatalystConfig",
    "CatalystState",
    "InnerBudgetExhausted",
    "ProxOracle",
    "prox_objective",
    "adaptive_gd",
    "adaptive_gd_stepper",
    "inner_solve",
    "InnerResult",
    "catalyst_outer_step",
    "run_catalyst",
]


class InnerBudgetExhausted(RuntimeError):
    """Inner method hit its iteration budget without certifying the stop rule."""


@dataclass
class CatalystConfig:
    """Outer-loop parameters.

    The search weights must satisfy ``alpha > beta > gamma > 0`` and the
    clamps ``L_d <= L0 <= L_u``.  Defaults are tunable configuration, not
    ground truth.
    """

    L0: float = 1.0
    L_u: float = 1e9
    L_d: float = 1e-6
    alpha: float = 4.0
    beta: float = 2.0
    gamma: float = 1.5
    max_outer: int = 100
    inner_budget: int = 5000

    def __post_init__(self):
        if not (self.alpha > self.beta > self.gamma > 0.0):
            raise ValueError("need alpha > beta > gamma > 0")
        if not (0.0 < self.L_d <= self.L0 <= self.L_u):
            raise ValueError("need 0 < L_d <= L0 <= L_u")
        if self.max_outer <= 0 or self.inner_budget <= 0:
            raise ValueError("max_outer and inner_budget must be positive")


@dataclass
class CatalystState:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    k: int = 0
    A: float = 0.0
    L: float = 1.0
    last_inner_counts: list = field(default_factory=list)
    converged: bool = False
    grad_threshold: float | None = None
    started: float = field(default_factory=time.perf_counter)


class ProxOracle(Oracle):
    """Wrapped oracle for f(y) + (L/2) ||y - center||^2.

    Calls are forwarded to (and counted on) the base oracle, so inner-method
    work shows up in the base oracle's counters.
    """

    def __init__(self, base: Oracle, center, L: float):
        if L <= 0:
            raise ValueError("prox weight L must be positive")
        super().__init__(base.dim)
        self.base = base
        self.center = as_point(center, base.dim)
        self.L = L

    def _value(self, x):
        d = x - self.center
        return self.base.value(x) + 0.5 * self.L * float(d @ d)

    def _gradient(self, x):
        return self.base.gradient(x) + self.L * (x - self.center)


def prox_objective(oracle: Oracle, center, L: float) -> ProxOracle:
    """Oracle for the regularized objective f(y) + (L/2)||y - center||^2."""
    return ProxOracle(oracle, center, L)


def adaptive_gd_stepper(oracle: Oracle, start, L_hint: float = 1.0):
    """Generator of gradient-descent iterates with backtracking curvature.

    Yields ``(x, f, grad, L_used)`` for the start point (``L_used`` None)
    and after every accepted step (``L_used`` the estimate that produced
    it).  A step ``x - (1/L_t) grad`` is accepted when it satisfies
    ``f(x+) <= f(x) - ||grad||^2 / (2 L_t)`` (up to a floating-point slack);
    ``L_t`` doubles on violation and halves after acceptance.
    """
    x = as_point(start, oracle.dim)
    f = oracle.value(x)
    Lt = max(L_hint, 1e-12)
    L_used = None
    while True:
        g = oracle.gradient(x)
        gn2 = float(g @ g)
        yield x, f, g, L_used
        for _ in range(200):
            cand = x - g / Lt
            f_cand = oracle.value(cand)
            if f_cand <= f - gn2 / (2.0 * Lt) + 4e-16 * max(1.0, abs(f)):
                break
            Lt *= 2.0
        else:
            raise ArithmeticError("backtracking failed to certify decrease")
        x, f = cand, f_cand
        L_used = Lt
        Lt = max(Lt / 2.0, 1e-12)


def adaptive_gd(oracle: Oracle, start, grad_tol: float = 1e-9,
                max_iters: int = 10000, L_hint: float = 1.0):
    """Standalone adaptive-stepsize gradient descent.

    Stops when ``||grad f(x)|| <= grad_tol`` (absolute) or after
    ``max_iters`` accepted steps.  Returns ``(point, trace)``; the trace
    reuses :class:`TraceRecord` with the accumulator fields unset.
    """
    if max_iters <= 0:
        raise ValueError("max_iters must be positive")
    started = time.perf_counter()
    trace: list[TraceRecord] = []
    stepper = adaptive_gd_stepper(oracle, start, L_hint)
    x_cur = None
    for k, (x, f, g, L_used) in enumerate(stepper):
        x_cur = x
        gn2 = float(g @ g)
        if k > 0:
            trace.append(TraceRecord(
                k=k, f_val=f, grad_norm_sq=gn2,
                A_k=math.nan, a_k=math.nan, tau_k=math.nan, L_hat=L_used,
                value_calls=oracle.value_calls, grad_calls=oracle.grad_calls,
                block_min_calls=oracle.block_min_calls,
                wall_time=time.perf_counter() - started))
        if math.sqrt(gn2) <= grad_tol or k >= max_iters:
            break
    return x_cur, trace


class InnerResult(NamedTuple):
    y: np.ndarray
    iterations: int
    converged: bool
    ms_lhs: float
    ms_rhs: float


def inner_solve(M: Callable, F: ProxOracle, start, L_target: float,
                budget: int) -> InnerResult:
    """Run the inner method on F until the adaptive stopping inequality holds.

    The inequality compares the prox-objective gradient at the iterate with
    its distance from the prox center: ``||grad F(y)|| <= (L/2)||y - x||``.
    It is checked at the start point (0 iterations) and after every accepted
    inner step.  On budget exhaustion the current (best, since the inner
    method is monotone) iterate is returned flagged unconverged; the outer
    loop decides how to proceed.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    stepper = M(F, start, L_target)
    n = 0
    for x, f, g, *_ in stepper:
        ms_lhs = math.sqrt(float(g @ g))
        d = x - F.center
        ms_rhs = 0.5 * L_target * math.sqrt(float(d @ d))
        if ms_lhs <= ms_rhs:
            return InnerResult(x, n, True, ms_lhs, ms_rhs)
        if n >= budget:
            return InnerResult(x, n, False, ms_lhs, ms_rhs)
        n += 1
    raise AssertionError("inner stepper terminated unexpectedly")


def catalyst_outer_step(state: CatalystState, oracle: Oracle,
                        config: CatalystConfig, M: Callable = adaptive_gd_stepper):
    """One outer step: search the prox weight, certify, and advance.

    Per retry ``t`` the coefficient, interpolated prox center, and inner
    solve are recomputed from scratch; nothing is committed until the retry
    loop exits.  The loop lowers the weight by ``beta`` per retry and exits
    once the inner iteration count grows by the factor ``gamma`` (with at
    least two retries) or the lower clamp is reached.  Raises
    :class:`InnerBudgetExhausted` when the accepted trial is uncertified.
    """
    L_trial = config.beta * min(config.alpha * state.L, config.L_u)
    t = 0
    counts: list[int] = []
    while True:
        t += 1
        L_trial = max(L_trial / config.beta, config.L_d)
        invL = 1.0 / L_trial
        a = 0.5 * (invL + math.sqrt(invL * invL + 4.0 * state.A * invL))
        A_next = state.A + a
        x_next = (state.A / A_next) * state.y + (a / A_next) * state.z
        F = prox_objective(oracle, x_next, L_trial)
        res = inner_solve(M, F, x_next, L_trial, config.inner_budget)
        counts.append(res.iterations)
        if (t > 1 and res.iterations >= config.gamma * counts[-2]) or L_trial == config.L_d:
            break
    state.last_inner_counts = counts
    if not res.converged:
        raise InnerBudgetExhausted(
            f"inner budget {config.inner_budget} exhausted at L={L_trial:.3e} "
            f"(outer step {state.k + 1}); stop inequality not certified"
        )
    y_next = res.y
    g = oracle.gradient(y_next)
    gn2 = float(g @ g)
    state.z = state.z - a * g
    state.x, state.y = x_next, y_next
    state.A, state.L = A_next, L_trial
    state.k += 1
    f_y = oracle.value(y_next)
    rec = TraceRecord(
        k=state.k,
        f_val=f_y,
        grad_norm_sq=gn2,
        A_k=A_next,
        a_k=a,
        tau_k=math.nan,
        L_hat=L_trial,
        value_calls=oracle.value_calls,
        grad_calls=oracle.grad_calls,
        block_min_calls=oracle.block_min_calls,
        wall_time=time.perf_counter() - state.started,
        inner_iters=sum(counts),
        ms_lhs=res.ms_lhs,
        ms_rhs=res.ms_rhs,
    )
    return state, rec


def run_catalyst(oracle: Oracle, x0, config: CatalystConfig | None = None,
                 M: Callable = adaptive_gd_stepper,
                 stop: StoppingRule | None = None,
                 call_budget: int | None = None):
    """Accelerate the inner method on ``oracle`` from ``x0``.

    Returns ``(y_final, trace)``; the trace carries the accepted prox weight
    in ``L_hat`` and per-step inner-iteration totals in ``inner_iters``.
    """
    config = config or CatalystConfig()
    stop = stop or StoppingRule()
    oracle.reset_counters()
    x0 = as_point(x0, oracle.dim)
    state = CatalystState(x=x0.copy(), y=x0.copy(), z=x0.copy(), L=config.L0)
    g0 = oracle.gradient(x0)
    state.grad_threshold = stop.threshold(math.sqrt(float(g0 @ g0)))
    trace: list[TraceRecord] = []
    if math.sqrt(float(g0 @ g0)) <= state.grad_threshold:
        state.converged = True
        return state.y, trace
    for _ in range(config.max_outer):
        if call_budget is not None and oracle.grad_calls + oracle.block_min_calls >= call_budget:
            break
        state, rec = catalyst_outer_step(state, oracle, config, M)
        trace.append(rec)
        if math.sqrt(rec.grad_norm_sq) <= state.grad_threshold:
            state.converged = True
            break
    return state.y, trace
