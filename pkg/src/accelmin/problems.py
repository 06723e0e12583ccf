"""Shipped problem oracles and generators.

Three families:

* :class:`QuadraticProblem` -- ``f(z) = ||W z - b||^2`` with symmetric W.
* :class:`SplitQuadraticProblem` -- the same objective split into two equal
  coordinate blocks with exact per-block minimizers from cached normal
  equation factorizations.
* :class:`EntropicOTDual` -- the smooth unconstrained dual of entropy
  regularized discrete optimal transport over potentials ``(u, v)``; exact
  block minimization over u or v is one log-domain matrix-scaling step, so
  alternating them is the classical scaling algorithm
  (:func:`run_sinkhorn`).

All entropic-transport arithmetic stays in the log domain with max-shift
stabilization.  Oracles are immutable after construction apart from call
counters.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .core import (
    BlockPartition,
    Oracle,
    StoppingRule,
    TraceRecord,
    as_point,
)

__all__ = [
    "GenerationFailure",
    "SingularBlockWarning",
    "QuadraticProblem",
    "SplitQuadraticProblem",
    "EntropicOTDual",
    "StrongConvexity",
    "strong_convexity_constant",
    "quad_value_grad",
    "split_block_minimize",
    "eot_value",
    "eot_grad",
    "eot_block_minimize",
    "run_sinkhorn",
    "generate_quadratic",
    "desk_eot_instance",
    "save_problem",
    "load_problem",
]


class GenerationFailure(RuntimeError):
    """Random instance generator missed its conditioning target."""


class SingularBlockWarning(UserWarning):
    """A block normal-equation matrix is singular; least-norm fallback used."""


def _check_symmetric(W: np.ndarray) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"W must be square, got {W.shape}")
    scale = max(1.0, float(np.abs(W).max()))
    if np.abs(W - W.T).max() > 1e-12 * scale:
        raise ValueError("W must be symmetric (to 1e-12)")
    return 0.5 * (W + W.T)


class QuadraticProblem(Oracle):
    """f(z) = ||W z - b||^2 for symmetric W."""

    def __init__(self, W, b):
        W = _check_symmetric(W)
        b = as_point(b, W.shape[0], "b")
        super().__init__(W.shape[0])
        self.W = W
        self.b = b
        self._eigs = np.linalg.eigvalsh(W)
        self.known_L = 2.0 * float(np.max(self._eigs ** 2))
        self.known_mu = 2.0 * float(np.min(self._eigs ** 2))
        self._solution = None

    def _value(self, z):
        r = self.W @ z - self.b
        return float(r @ r)

    def _gradient(self, z):
        return 2.0 * (self.W.T @ (self.W @ z - self.b))

    @property
    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of W (the Hessian is 2 W^T W)."""
        return self._eigs

    @property
    def condition_number(self) -> float:
        amin = float(np.min(np.abs(self._eigs)))
        if amin == 0.0:
            return math.inf
        return float(np.max(np.abs(self._eigs))) / amin

    def solution(self) -> np.ndarray:
        """Minimizer W^{-1} b (least squares when W is near-singular)."""
        if self._solution is None:
            if np.min(np.abs(self._eigs)) > 1e-12 * np.max(np.abs(self._eigs)):
                self._solution = np.linalg.solve(self.W, self.b)
            else:
                self._solution = np.linalg.lstsq(self.W, self.b, rcond=None)[0]
        return self._solution

    def f_star(self) -> float:
        return self._value(self.solution())


@dataclass
class StrongConvexity:
    """Two labeled strong-convexity readings for ||W z - b||^2.

    ``hessian``: 2 lambda_min(W^T W), forced by the analytic Hessian 2 W^T W;
    the value certificates should use.  ``paper_value``: sqrt(lambda_min(W^T W)),
    kept for comparison with reported experiment setups.
    """

    paper_value: float
    hessian: float


def strong_convexity_constant(problem: QuadraticProblem) -> StrongConvexity:
    lmin_sq = float(np.min(problem.eigenvalues ** 2))
    return StrongConvexity(paper_value=math.sqrt(lmin_sq), hessian=2.0 * lmin_sq)


def quad_value_grad(problem: QuadraticProblem, z):
    """Value and gradient in one residual evaluation."""
    z = as_point(z, problem.dim, "z")
    r = problem.W @ z - problem.b
    if problem._counting:
        problem.value_calls += 1
        problem.grad_calls += 1
    return float(r @ r), 2.0 * (problem.W.T @ r)


class SplitQuadraticProblem(Oracle):
    """||A x + B y - c||^2 + ||C x + D y - d||^2 over two equal blocks.

    Assembled from a symmetric W and b split in half; the assembled and the
    split forms evaluate identically.  Block minimizers solve the cached
    normal equations, e.g. the x-update is
    ``(A^T A + C^T C)^{-1} (A^T (c - B y) + C^T (d - D y))``.
    """

    def __init__(self, W, b):
        W = _check_symmetric(W)
        if W.shape[0] % 2 != 0:
            raise ValueError("split quadratic needs an even dimension")
        b = as_point(b, W.shape[0], "b")
        super().__init__(W.shape[0])
        self.W = W
        self.b = b
        h = W.shape[0] // 2
        self._h = h
        self.A = W[:h, :h]
        self.B = W[:h, h:]
        self.C = W[h:, :h]
        self.D = W[h:, h:]
        self.c = b[:h]
        self.d = b[h:]
        self.partition = BlockPartition.halves(W.shape[0])
        self._eigs = np.linalg.eigvalsh(W)
        self.known_L = 2.0 * float(np.max(self._eigs ** 2))
        self.known_mu = 2.0 * float(np.min(self._eigs ** 2))
        self._factors = [
            self._try_factor(self.A.T @ self.A + self.C.T @ self.C),
            self._try_factor(self.B.T @ self.B + self.D.T @ self.D),
        ]
        self._solution = None

    @staticmethod
    def _try_factor(M):
        try:
            return cho_factor(M)
        except np.linalg.LinAlgError:
            return None
        except ValueError:
            return None

    def _value(self, z):
        r = self.W @ z - self.b
        return float(r @ r)

    def _gradient(self, z):
        return 2.0 * (self.W.T @ (self.W @ z - self.b))

    def _block_minimize(self, z, i):
        h = self._h
        x, y = z[:h], z[h:]
        if i == 0:
            rhs = self.A.T @ (self.c - self.B @ y) + self.C.T @ (self.d - self.D @ y)
            stacked = (np.vstack([self.A, self.C]),
                       np.concatenate([self.c - self.B @ y, self.d - self.D @ y]))
        elif i == 1:
            rhs = self.B.T @ (self.c - self.A @ x) + self.D.T @ (self.d - self.C @ x)
            stacked = (np.vstack([self.B, self.D]),
                       np.concatenate([self.c - self.A @ x, self.d - self.C @ x]))
        else:
            raise IndexError(f"block index {i} out of range for 2 blocks")
        fac = self._factors[i]
        if fac is not None:
            sol = cho_solve(fac, rhs)
        else:
            warnings.warn("singular block system; least-norm solve",
                          SingularBlockWarning)
            sol = np.linalg.lstsq(stacked[0], stacked[1], rcond=None)[0]
        out = z.copy()
        if i == 0:
            out[:h] = sol
        else:
            out[h:] = sol
        return out

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigs

    def solution(self) -> np.ndarray:
        if self._solution is None:
            self._solution = np.linalg.solve(self.W, self.b)
        return self._solution

    def f_star(self) -> float:
        return self._value(self.solution())

    def assembled(self) -> QuadraticProblem:
        """The same objective as an unpartitioned oracle."""
        return QuadraticProblem(self.W, self.b)


def split_block_minimize(problem: SplitQuadraticProblem, point, block) -> np.ndarray:
    """Exact minimization over one half; ``block`` is 0/'x' or 1/'y'."""
    i = {"x": 0, "y": 1, 0: 0, 1: 1}[block]
    return problem.block_minimize(point, i)


# ---------------------------------------------------------------------------
# entropic optimal transport dual
# ---------------------------------------------------------------------------


class EntropicOTDual(Oracle):
    """Dual of entropy-regularized optimal transport over potentials (u, v).

    With ``B_ij(u, v) = exp(u_i + v_j - C_ij / gamma)`` the objective is::

        f(u, v) = gamma * (ln(1^T B 1) - <u, r> - <v, c>)

    which is invariant under constant shifts of u or v (the marginals sum to
    one), hence degenerate along (1, -1).  Block minimization over u is the
    log-domain row-scaling update ``u_i <- u_i + ln r_i - ln [B 1]_i``; by
    default the updated block is then re-centered to zero mean, which changes
    nothing but the representative on the degeneracy line and keeps iterates
    bounded.  Pass ``canonicalize=False`` for the raw scaling update.
    """

    def __init__(self, C_cost, r, c, gamma: float, canonicalize: bool = True):
        C_cost = np.asarray(C_cost, dtype=float)
        if C_cost.ndim != 2 or C_cost.shape[0] != C_cost.shape[1]:
            raise ValueError("cost matrix must be square")
        if not np.all(np.isfinite(C_cost)) or np.any(C_cost < 0):
            raise ValueError("cost matrix must be finite and nonnegative")
        if gamma <= 0:
            raise ValueError("gamma must be positive")
        n = C_cost.shape[0]
        r = as_point(r, n, "r")
        c = as_point(c, n, "c")
        for name, p in (("r", r), ("c", c)):
            if np.any(p < 1e-300):
                raise ValueError(f"{name} entries must be >= 1e-300")
            if abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
        super().__init__(2 * n)
        self.N = n
        self.C_cost = C_cost
        self.r = r
        self.c = c
        self.gamma = gamma
        self.canonicalize = canonicalize
        self.partition = BlockPartition.halves(2 * n)
        self._Cg = C_cost / gamma
        self._ln_r = np.log(r)
        self._ln_c = np.log(c)

    def _log_kernel(self, u, v):
        return u[:, None] + v[None, :] - self._Cg

    def _value(self, x):
        u, v = x[:self.N], x[self.N:]
        M = self._log_kernel(u, v)
        total = float(logsumexp(M))
        return self.gamma * (total - float(u @ self.r) - float(v @ self.c))

    def _gradient(self, x):
        u, v = x[:self.N], x[self.N:]
        M = self._log_kernel(u, v)
        m = M.max()
        E = np.exp(M - m)
        tot = E.sum()
        gu = self.gamma * (E.sum(axis=1) / tot - self.r)
        gv = self.gamma * (E.sum(axis=0) / tot - self.c)
        return np.concatenate([gu, gv])

    def _block_minimize(self, x, i):
        u, v = x[:self.N], x[self.N:]
        out = x.copy()
        if i == 0:
            # u_i + ln r_i - ln[B 1]_i, with ln[B 1]_i = u_i + lse_j(v_j - Cg_ij)
            row_lse = logsumexp(v[None, :] - self._Cg, axis=1)
            new = self._ln_r - row_lse
            if self.canonicalize:
                new = new - new.mean()
            out[:self.N] = new
        elif i == 1:
            col_lse = logsumexp(u[:, None] - self._Cg, axis=0)
            new = self._ln_c - col_lse
            if self.canonicalize:
                new = new - new.mean()
            out[self.N:] = new
        else:
            raise IndexError(f"block index {i} out of range for 2 blocks")
        return out

    def split(self, x):
        x = as_point(x, self.dim)
        return x[:self.N], x[self.N:]

    def combine(self, u, v):
        return np.concatenate([as_point(u, self.N, "u"), as_point(v, self.N, "v")])

    def plan(self, x) -> np.ndarray:
        """Normalized transport plan B / (1^T B 1); shift-invariant."""
        u, v = self.split(x)
        M = self._log_kernel(u, v)
        E = np.exp(M - M.max())
        return E / E.sum()


def eot_value(problem: EntropicOTDual, u, v) -> float:
    return problem.value(problem.combine(u, v))


def eot_grad(problem: EntropicOTDual, u, v) -> np.ndarray:
    return problem.gradient(problem.combine(u, v))


def eot_block_minimize(problem: EntropicOTDual, u, v, block) -> np.ndarray:
    """One exact block update; ``block`` is 0/'u' or 1/'v'."""
    i = {"u": 0, "v": 1, 0: 0, 1: 1}[block]
    return problem.block_minimize(problem.combine(u, v), i)


def run_sinkhorn(problem: EntropicOTDual, u0=None, v0=None,
                 stop: StoppingRule | None = None, max_iters: int = 1000,
                 call_budget: int | None = None):
    """Alternating exact block minimization of the transport dual.

    One iteration is a full sweep (u-update then v-update), i.e. one
    classical matrix-scaling step.  The trace logs the dual value and
    squared gradient norm after each sweep; these monitoring evaluations do
    not count toward the oracle counters.

    Returns ``(point, trace)``.
    """
    stop = stop or StoppingRule()
    oracle = problem
    oracle.reset_counters()
    u = np.zeros(problem.N) if u0 is None else as_point(u0, problem.N, "u0")
    v = np.zeros(problem.N) if v0 is None else as_point(v0, problem.N, "v0")
    x = problem.combine(u, v)
    started = time.perf_counter()
    with oracle.paused_counters():
        g0 = oracle.gradient(x)
    threshold = stop.threshold(math.sqrt(float(g0 @ g0)))
    if math.sqrt(float(g0 @ g0)) <= threshold:
        return x, []
    trace: list[TraceRecord] = []
    for k in range(1, max_iters + 1):
        if call_budget is not None and oracle.grad_calls + oracle.block_min_calls >= call_budget:
            break
        x = oracle.block_minimize(x, 0)
        x = oracle.block_minimize(x, 1)
        with oracle.paused_counters():
            f = oracle.value(x)
            g = oracle.gradient(x)
        gn2 = float(g @ g)
        trace.append(TraceRecord(
            k=k, f_val=f, grad_norm_sq=gn2,
            A_k=math.nan, a_k=math.nan, tau_k=math.nan, L_hat=None,
            value_calls=oracle.value_calls, grad_calls=oracle.grad_calls,
            block_min_calls=oracle.block_min_calls,
            wall_time=time.perf_counter() - started))
        if math.sqrt(gn2) <= threshold:
            break
    return x, trace


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def _random_orthogonal(rng, n: int) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def _spd_with_condition(rng, n: int, kappa: float) -> np.ndarray:
    """Symmetric PD matrix with spectrum linspace(1, kappa): condition kappa."""
    Q = _random_orthogonal(rng, n)
    spectrum = np.linspace(1.0, kappa, n)
    return (Q * spectrum) @ Q.T


def _cond(W: np.ndarray) -> float:
    eigs = np.linalg.eigvalsh(W)
    if eigs.min() <= 0.0:
        return math.inf
    return float(eigs.max() / eigs.min())


def generate_quadratic(dim: int, kappa: float, kappa1: float, kappa2: float,
                       seed: int = 0, rel_tol: float = 0.05,
                       max_retries: int = 5) -> SplitQuadraticProblem:
    """Random split quadratic with controlled conditioning.

    Builds symmetric positive-definite W = [[A, sB0], [sB0^T, D]] where the
    diagonal blocks carry exact condition numbers ``kappa1`` and ``kappa2``
    (prescribed spectra under orthogonal conjugation) and the coupling scale
    ``s`` is bisected so that cond(W) hits ``kappa`` within ``rel_tol``.
    Deterministic for a fixed seed.
    """
    if dim % 2 != 0 or dim < 2:
        raise ValueError("dim must be even and >= 2")
    if not (kappa >= max(kappa1, kappa2) >= 1.0):
        raise ValueError("need kappa >= max(kappa1, kappa2) >= 1")
    rng = np.random.default_rng(seed)
    h = dim // 2
    for _ in range(max_retries):
        A = _spd_with_condition(rng, h, kappa1)
        D = _spd_with_condition(rng, h, kappa2)
        B0 = rng.standard_normal((h, h))
        B0 /= np.linalg.norm(B0, 2)
        b = rng.standard_normal(dim)

        def assemble(s):
            top = np.hstack([A, s * B0])
            bot = np.hstack([s * B0.T, D])
            return np.vstack([top, bot])

        base_cond = _cond(assemble(0.0))
        if abs(base_cond - kappa) <= rel_tol * kappa:
            return SplitQuadraticProblem(assemble(0.0), b)
        if base_cond > kappa:
            continue  # unreachable under the precondition, retry defensively
        s_hi = 1.0
        for _ in range(60):
            if _cond(assemble(s_hi)) >= kappa:
                break
            s_hi *= 2.0
        else:
            continue
        s_lo = 0.0
        for _ in range(200):
            mid = 0.5 * (s_lo + s_hi)
            if mid == s_lo or mid == s_hi:
                break
            if _cond(assemble(mid)) < kappa:
                s_lo = mid
            else:
                s_hi = mid
        W = assemble(s_lo)
        achieved = _cond(W)
        if abs(achieved - kappa) <= rel_tol * kappa:
            return SplitQuadraticProblem(W, b)
    raise GenerationFailure(
        f"could not hit condition number {kappa} within {rel_tol:.0%} "
        f"after {max_retries} draws"
    )


def desk_eot_instance(n: int = 64, gamma: float = 1.0, seed: int = 0,
                      cost_scale: float = 600.0,
                      canonicalize: bool = True) -> EntropicOTDual:
    """Reproducible desk-scale transport instance.

    Cost: squared distances on a 1-D grid, scaled so the largest entry is
    ``cost_scale``.  The scale sits well above the default regularization so
    the kernel is stiff (the regime where the method comparison is
    informative; with cost max comparable to gamma every solver converges in
    a handful of sweeps).  Marginals: smoothed random histograms with
    deliberately different profiles per block, a sharply peaked one for the
    rows and a near-uniform one for the columns.
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, n)
    C = (grid[:, None] - grid[None, :]) ** 2
    C = C / C.max() * cost_scale

    def marginal(sigma, floor, sharpen):
        raw = rng.random(n)
        half = min(int(3 * sigma), n // 2 - 1)
        t = np.arange(-half, half + 1)
        kernel = np.exp(-0.5 * (t / max(sigma, 1e-9)) ** 2)
        smooth = np.convolve(raw, kernel / kernel.sum(), mode="same") ** sharpen
        smooth += floor
        return smooth / smooth.sum()

    r = marginal(1.2, 1e-5, 6)
    c = marginal(8.0, 0.3, 1)
    return EntropicOTDual(C, r, c, gamma, canonicalize=canonicalize)


# ---------------------------------------------------------------------------
# plain-text serialization
# ---------------------------------------------------------------------------


def _fmt_row(row) -> str:
    return " ".join(f"{x:.17g}" for x in np.atleast_1d(row))


def save_problem(problem, path) -> None:
    """Write a problem to the plain-text matrix format.

    First line: family and dimension.  Then row-major whitespace-separated
    entries at 17 significant digits (enough to round-trip float64):
    quadratics store W then b; transport instances store gamma, the cost
    matrix, then both marginals.
    """
    lines = []
    if isinstance(problem, SplitQuadraticProblem):
        lines.append(f"split_quadratic {problem.dim}")
        lines.extend(_fmt_row(row) for row in problem.W)
        lines.append(_fmt_row(problem.b))
    elif isinstance(problem, QuadraticProblem):
        lines.append(f"quadratic {problem.dim}")
        lines.extend(_fmt_row(row) for row in problem.W)
        lines.append(_fmt_row(problem.b))
    elif isinstance(problem, EntropicOTDual):
        lines.append(f"eot {problem.N}")
        lines.append(f"{problem.gamma:.17g}")
        lines.extend(_fmt_row(row) for row in problem.C_cost)
        lines.append(_fmt_row(problem.r))
        lines.append(_fmt_row(problem.c))
    else:
        raise TypeError(f"cannot serialize {type(problem).__name__}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path):
    """Load a problem written by :func:`save_problem`."""
    with open(path) as fh:
        lines = [ln for ln in (line.strip() for line in fh) if ln]
    family, dim_s = lines[0].split()
    dim = int(dim_s)
    if family in ("quadratic", "split_quadratic"):
        W = np.array([[float(x) for x in lines[1 + i].split()] for i in range(dim)])
        b = np.array([float(x) for x in lines[1 + dim].split()])
        cls = SplitQuadraticProblem if family == "split_quadratic" else QuadraticProblem
        return cls(W, b)
    if family == "eot":
        gamma = float(lines[1])
        C = np.array([[float(x) for x in lines[2 + i].split()] for i in range(dim)])
        r = np.array([float(x) for x in lines[2 + dim].split()])
        c = np.array([float(x) for x in lines[3 + dim].split()])
        return EntropicOTDual(C, r, c, gamma)
    raise ValueError(f"unknown problem family {family!r}")
