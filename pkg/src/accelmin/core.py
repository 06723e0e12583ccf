"""Shared oracle/vector abstractions, exact 1-D searches, and coefficient solvers.

Everything downstream (the accelerated solvers, the problem oracles, the
benchmark harness) is built on the pieces in this module.  Points are plain
1-D float64 numpy arrays; an :class:`Oracle` is the problem interface that
solvers consume.
"""

from __future__ import annotations

import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonFiniteValue",
    "BracketFailure",
    "InvalidCoefficient",
    "NoRoot",
    "DegenerateStep",
    "InvalidBound",
    "DimensionMismatch",
    "BlockPartition",
    "Oracle",
    "TraceRecord",
    "StoppingRule",
    "as_point",
    "line_search_unit_interval",
    "line_search_ray",
    "solve_coefficient_known_L",
    "solve_sufficient_decrease",
    "finite_diff_gradient",
]

# Golden ratio conjugate, the interval shrink factor of golden-section search.
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

# Hard cap on 1-D search function evaluations.
MAX_LINESEARCH_EVALS = 200

# Step-doubling budget for bracketing (covers a 2^60 dynamic range).
DOUBLING_CAP = 60


class NonFiniteValue(ArithmeticError):
    """A function evaluation returned NaN or +-Inf."""


class BracketFailure(RuntimeError):
    """No minimizer bracket found within the doubling budget.

    On a ray search this signals a direction along which the objective looks
    unbounded below.
    """


class InvalidCoefficient(ValueError):
    """Coefficient equation is undefined (rate factor Ln <= mu)."""


class NoRoot(RuntimeError):
    """No sign change found for the sufficient-decrease equation."""


class DegenerateStep(RuntimeError):
    """No objective decrease although the gradient is not small.

    Signals a line-search or block-minimization failure: the
    sufficient-decrease equation has no positive root at delta <= 0.
    """


class InvalidBound(ValueError):
    """A certificate bound is undefined for the supplied constants."""


class DimensionMismatch(ValueError):
    """Point dimension does not match the oracle's."""


def as_point(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Validate and convert ``x`` to a finite 1-D float64 array."""
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise DimensionMismatch(f"{name} has dimension {p.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(p)):
        raise NonFiniteValue(f"{name} contains NaN/Inf entries")
    return p


class BlockPartition:
    """Disjoint, nonempty index blocks covering all coordinates 0..m-1."""

    def __init__(self, blocks, total_dim: int):
        idx_blocks = []
        seen = np.zeros(total_dim, dtype=bool)
        for b in blocks:
            arr = np.asarray(b, dtype=int)
            if arr.size == 0:
                raise ValueError("empty block in partition")
            if arr.min() < 0 or arr.max() >= total_dim:
                raise ValueError("block index out of range")
            if seen[arr].any():
                raise ValueError("blocks are not disjoint")
            seen[arr] = True
            idx_blocks.append(np.sort(arr))
        if not seen.all():
            raise ValueError("blocks do not cover all coordinates")
        self.blocks = tuple(idx_blocks)
        self.total_dim = total_dim

    @property
    def n(self) -> int:
        return len(self.blocks)

    def indices(self, i: int) -> np.ndarray:
        return self.blocks[i]

    @classmethod
    def single(cls, dim: int) -> "BlockPartition":
        return cls([np.arange(dim)], dim)

    @classmethod
    def halves(cls, dim: int) -> "BlockPartition":
        if dim % 2 != 0:
            raise ValueError("halves partition needs an even dimension")
        h = dim // 2
        return cls([np.arange(h), np.arange(h, dim)], dim)

    def __repr__(self):
        sizes = [len(b) for b in self.blocks]
        return f"BlockPartition(n={self.n}, sizes={sizes}, total_dim={self.total_dim})"


class Oracle:
    """Problem interface: objective value, gradient, optional block structure.

    Subclasses implement ``_value`` / ``_gradient`` and, when the problem
    supports exact per-block minimization, ``_block_minimize``.  The public
    methods validate inputs and count calls; counters are exact under the
    intended single-threaded solver loop (parallel benchmark runs should use
    one oracle instance per run).
    """

    partition: BlockPartition | None = None
    known_L: float | None = None
    known_mu: float | None = None

    def __init__(self, dim: int):
        self.dim = dim
        self.value_calls = 0
        self.grad_calls = 0
        self.block_min_calls = 0
        self._counting = True

    # -- public, counted entry points ------------------------------------

    def value(self, x) -> float:
        x = as_point(x, self.dim)
        if self._counting:
            self.value_calls += 1
        return float(self._value(x))

    def gradient(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if self._counting:
            self.grad_calls += 1
        return self._gradient(x)

    def block_minimize(self, x, i: int) -> np.ndarray:
        if self.partition is None:
            raise NotImplementedError("oracle has no block partition")
        x = as_point(x, self.dim)
        if self._counting:
            self.block_min_calls += 1
        return self._block_minimize(x, i)

    @property
    def has_block_minimize(self) -> bool:
        return self.partition is not None and type(self)._block_minimize is not Oracle._block_minimize

    # -- bookkeeping -------------------------------------------------------

    def reset_counters(self) -> None:
        self.value_calls = 0
        self.grad_calls = 0
        self.block_min_calls = 0

    @contextmanager
    def paused_counters(self):
        """Suspend call counting, e.g. for trace monitoring evaluations."""
        prev = self._counting
        self._counting = False
        try:
            yield self
        finally:
            self._counting = prev

    # -- to be provided by subclasses ---------------------------------------

    def _value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _block_minimize(self, x: np.ndarray, i: int) -> np.ndarray:
        raise NotImplementedError


@dataclass
class TraceRecord:
    """Per-iteration telemetry shared by all solver loops.

    ``A_k``/``tau_k`` are the post-step values and ``a_k`` the coefficient the
    step used, so ``A_k - a_k`` recovers the pre-step accumulator.  Call
    counters are cumulative since the run started.  The optional fields carry
    in-memory diagnostics (estimate-sequence value, catalyst inner stats) that
    do not appear in CSV artifacts.
    """

    k: int
    f_val: float
    grad_norm_sq: float
    A_k: float
    a_k: float
    tau_k: float
    L_hat: float | None
    value_calls: int
    grad_calls: int
    block_min_calls: int
    wall_time: float
    psi_at_v: float | None = None
    inner_iters: int | None = None
    ms_lhs: float | None = None
    ms_rhs: float | None = None


@dataclass
class StoppingRule:
    """Gradient-norm stopping: stop when ||grad|| <= max(abs, rel * ||grad0||)."""

    grad_tol_rel: float = 1e-9
    grad_tol_abs: float = 0.0

    def threshold(self, grad0_norm: float) -> float:
        return max(self.grad_tol_abs, self.grad_tol_rel * grad0_norm)


# ---------------------------------------------------------------------------
# one-dimensional exact searches
# ---------------------------------------------------------------------------


def _checked_eval(phi, t: float) -> float:
    val = float(phi(t))
    if not math.isfinite(val):
        raise NonFiniteValue(f"phi({t!r}) = {val!r}")
    return val


def _golden_refine(phi, lo, f_lo, hi, f_hi, tol, best, evals_left):
    """Golden-section refinement on [lo, hi], tracking the best point seen.

    ``best`` is a (t, phi(t)) pair that already includes both bracket
    endpoints; the returned pair therefore never exceeds either endpoint
    value even if phi is not unimodal.
    """
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    if evals_left < 2:
        return best
    f1 = _checked_eval(phi, x1)
    f2 = _checked_eval(phi, x2)
    evals_left -= 2
    for t, ft in ((x1, f1), (x2, f2)):
        if ft < best[1]:
            best = (t, ft)
    while hi - lo > tol and evals_left > 0:
        if f1 <= f2:
            hi, f_hi = x2, f2
            x2, f2 = x1, f1
            x1 = hi - _INVPHI * (hi - lo)
            f1 = _checked_eval(phi, x1)
            if f1 < best[1]:
                best = (x1, f1)
        else:
            lo, f_lo = x1, f1
            x1, f1 = x2, f2
            x2 = lo + _INVPHI * (hi - lo)
            f2 = _checked_eval(phi, x2)
            if f2 < best[1]:
                best = (x2, f2)
        evals_left -= 1
    return best


def line_search_unit_interval(phi, tol: float = 1e-10):
    """Minimize ``phi`` over [0, 1] by golden section.

    Both endpoints are always evaluated, so the returned value never exceeds
    ``min(phi(0), phi(1))`` even when ``phi`` is not unimodal.  For unimodal
    ``phi`` the returned argument is within ``tol`` of the minimizer.

    Returns ``(beta_star, phi_star)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f0 = _checked_eval(phi, 0.0)
    f1 = _checked_eval(phi, 1.0)
    best = (0.0, f0) if f0 <= f1 else (1.0, f1)
    best = _golden_refine(phi, 0.0, f0, 1.0, f1, tol, best, MAX_LINESEARCH_EVALS - 2)
    return best


def line_search_ray(phi, tol: float = 1e-10, initial_step: float = 1.0):
    """Minimize ``phi`` over [0, inf) by step doubling plus golden section.

    Brackets a minimizer by doubling from ``initial_step`` and refines the
    bracket to a relative argument tolerance ``tol``.  Guarantees
    ``phi(h_star) <= phi(0)``.  Raises :class:`BracketFailure` when the
    objective keeps decreasing past the doubling budget.

    Returns ``(h_star, phi_star)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f0 = _checked_eval(phi, 0.0)
    evals = 1
    best = (0.0, f0)
    s = float(initial_step)
    fs = _checked_eval(phi, s)
    evals += 1
    if fs < best[1]:
        best = (s, fs)
    if fs >= f0:
        # Minimizer (or the boundary 0) lies in [0, s].
        return _golden_refine(phi, 0.0, f0, s, fs, tol * max(1.0, s), best,
                              MAX_LINESEARCH_EVALS - evals)
    lo, f_lo = 0.0, f0
    mid, f_mid = s, fs
    for _ in range(DOUBLING_CAP):
        hi = 2.0 * mid
        f_hi = _checked_eval(phi, hi)
        evals += 1
        if f_hi < best[1]:
            best = (hi, f_hi)
        if f_hi >= f_mid:
            return _golden_refine(phi, lo, f_lo, hi, f_hi, tol * max(1.0, hi), best,
                                  MAX_LINESEARCH_EVALS - evals)
        lo, f_lo = mid, f_mid
        mid, f_mid = hi, f_hi
    raise BracketFailure(
        f"no bracket within {DOUBLING_CAP} doublings from step {initial_step}; "
        "direction may be unbounded below"
    )


# ---------------------------------------------------------------------------
# coefficient equations
# ---------------------------------------------------------------------------


def solve_coefficient_known_L(A_k: float, tau_k: float, mu: float, Ln: float) -> float:
    """Positive root of a^2 / ((A_k + a)(tau_k + mu a)) = 1 / Ln.

    Equivalent to the quadratic (Ln - mu) a^2 - (tau_k + mu A_k) a - A_k tau_k = 0,
    which has exactly one positive root when Ln > mu.
    """
    if Ln <= mu:
        raise InvalidCoefficient(f"rate factor undefined: Ln={Ln} <= mu={mu}")
    lead = Ln - mu
    p = tau_k + mu * A_k
    q = A_k * tau_k
    return (p + math.sqrt(p * p + 4.0 * lead * q)) / (2.0 * lead)


def _sufficient_decrease_residual(a, A_k, tau_k, mu, g2, d2, delta):
    den = 2.0 * (A_k + a) * (tau_k + mu * a)
    return (a * a * g2 - mu * tau_k * a * d2) / den - delta


def solve_sufficient_decrease(
    A_k: float,
    tau_k: float,
    mu: float,
    grad_norm_sq: float,
    vy_dist_sq: float,
    delta: float,
    f_scale: float = 1.0,
) -> float:
    """Solve the sufficient-decrease equation for the step coefficient a > 0.

    The equation is::

        a^2 g2 / (2 (A_k + a)(tau_k + mu a))
            - mu tau_k a d2 / (2 (A_k + a)(tau_k + mu a)) = delta

    with ``g2 = grad_norm_sq``, ``d2 = vy_dist_sq`` and
    ``delta = f(y) - f(x+)``.  For mu = 0 the closed form
    ``a = (delta + sqrt(delta^2 + 2 delta A_k g2)) / g2`` is exact; for
    mu > 0 the root is bracketed geometrically from the mu = 0 value and
    refined by bisection.

    ``f_scale`` sets the floating-point noise floor: delta in
    ``[-1e-12 * max(1, |f_scale|), 0]`` is clamped to zero, which then raises
    :class:`DegenerateStep` (the caller decides whether that means converged).
    """
    if grad_norm_sq <= 0.0:
        raise DegenerateStep("zero gradient: coefficient equation degenerate")
    tiny = 1e-12 * max(1.0, abs(f_scale))
    if -tiny <= delta <= 0.0:
        delta = 0.0
    if delta <= 0.0:
        raise DegenerateStep(
            f"no objective decrease (delta={delta:.3e}); "
            "line search or block minimization failed"
        )
    g2 = grad_norm_sq
    a0 = (delta + math.sqrt(delta * delta + 2.0 * delta * A_k * g2)) / g2
    if mu == 0.0:
        return a0

    def resid(a):
        return _sufficient_decrease_residual(a, A_k, tau_k, mu, g2, vy_dist_sq, delta)

    r0 = resid(a0)
    if r0 == 0.0:
        return a0
    if r0 < 0.0:
        lo, hi = a0, a0
        for _ in range(DOUBLING_CAP):
            lo, hi = hi, 2.0 * hi
            if resid(hi) >= 0.0:
                break
        else:
            raise NoRoot(
                "sufficient-decrease equation has no positive root "
                f"(residual limit {g2 / (2 * mu):.3e} <= delta {delta:.3e}?)"
            )
    else:
        lo, hi = a0, a0
        for _ in range(DOUBLING_CAP):
            lo, hi = lo / 2.0, lo
            if resid(lo) <= 0.0:
                break
        else:
            raise NoRoot("could not bracket the sufficient-decrease root from below")
    # Safeguarded bisection; ~200 halvings reach full double precision.
    for _ in range(240):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if resid(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    a = 0.5 * (lo + hi)
    if abs(resid(a)) > 1e-12 * max(1.0, abs(f_scale)):
        raise NoRoot(f"bisection stalled with residual {resid(a):.3e}")
    return a


def finite_diff_gradient(oracle: Oracle, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of ``oracle.value`` at ``x``."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_point(x, oracle.dim)
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.shape[0]):
        e[i] = h
        g[i] = (oracle.value(x + e) - oracle.value(x - e)) / (2.0 * h)
        e[i] = 0.0
    if not np.all(np.isfinite(g)):
        raise NonFiniteValue("finite-difference gradient is not finite")
    return g


class _RunClock:
    """Wall-clock for per-record timestamps."""

    def __init__(self):
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0
