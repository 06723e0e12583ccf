"""Experiment runner: solve, certify, and emit artifacts.

Each experiment runs every configured method on one shared problem instance
from one shared start point, then checks the applicable rate certificates
against the traces.  Artifacts per run: one CSV trace per method (fixed
columns, 17-significant-digit decimals), a certificate CSV, a summary, an
SVG convergence plot, and a verbatim echo of the config.

Artifacts are byte-deterministic for a fixed config and seed.  The CSV
``wall_time_s`` column is therefore written as 0 unless ``timing = true`` is
set in the config; measured runtimes always appear in ``summary.txt``, which
is outside the determinism contract.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import StoppingRule, TraceRecord
from ..agmsdr import lemma1_certificate, run_agmsdr
from ..aam import ak_growth_certificate, main_theorem_bound, run_aam
from ..catalyst import CatalystConfig, run_catalyst
from ..problems import (
    EntropicOTDual,
    QuadraticProblem,
    SplitQuadraticProblem,
    desk_eot_instance,
    generate_quadratic,
    run_sinkhorn,
)
from ..core import InvalidBound
from .config import ConfigError, ExperimentConfig
from .svgplot import emit_plot

__all__ = [
    "CSV_COLUMNS",
    "CertResult",
    "MethodResult",
    "RunArtifact",
    "MissingFact",
    "build_problem",
    "run_experiment",
    "verify_certificates",
    "write_trace_csv",
    "read_trace_csv",
    "parse_facts",
]

CSV_COLUMNS = ("k", "f", "f_minus_fstar", "grad_norm_sq", "A_k", "a_k",
               "tau_k", "L_hat", "oracle_value_calls", "oracle_grad_calls",
               "block_min_calls", "wall_time_s")

REL_SLACK = 1e-6          # relative slack on every bound comparison
PSI_SLACK = 1e-8          # scale-relative slack for the estimate-sequence check
COEFF_TOL = 1e-12         # catalyst coefficient identity tolerance


class MissingFact(KeyError):
    """A constant required by a certificate is unavailable."""


@dataclass
class CertResult:
    method: str
    name: str
    passed: bool | None        # None = skipped
    max_violation: float = 0.0
    checked: int = 0
    detail: str = ""

    @property
    def status(self) -> str:
        return "SKIP" if self.passed is None else ("PASS" if self.passed else "FAIL")


@dataclass
class MethodResult:
    name: str
    kind: str
    trace: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    error: str | None = None
    elapsed: float = 0.0


@dataclass
class RunArtifact:
    out_dir: Path
    trace_csvs: dict
    cert_csv: Path | None
    svg_path: Path | None
    summary_path: Path
    cert_results: list
    method_results: list
    f_star: float
    f_star_is_proxy: bool
    ok: bool


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def write_trace_csv(path, trace, f_star: float, timing: bool = False) -> Path:
    """Write one method trace with the fixed column layout."""
    lines = [",".join(CSV_COLUMNS)]
    for rec in trace:
        l_hat = math.nan if rec.L_hat is None else rec.L_hat
        wall = rec.wall_time if timing else 0.0
        lines.append(",".join((
            str(rec.k), _fmt(rec.f_val), _fmt(rec.f_val - f_star),
            _fmt(rec.grad_norm_sq), _fmt(rec.A_k), _fmt(rec.a_k),
            _fmt(rec.tau_k), _fmt(l_hat), str(rec.value_calls),
            str(rec.grad_calls), str(rec.block_min_calls), _fmt(wall),
        )))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace_csv(path) -> list[TraceRecord]:
    """Load a trace CSV back into records (runtime-only fields stay unset)."""
    lines = Path(path).read_text().strip().splitlines()
    header = tuple(lines[0].split(","))
    if header != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    trace = []
    for line in lines[1:]:
        vals = line.split(",")
        row = dict(zip(CSV_COLUMNS, vals))
        l_hat = float(row["L_hat"])
        trace.append(TraceRecord(
            k=int(row["k"]), f_val=float(row["f"]),
            grad_norm_sq=float(row["grad_norm_sq"]), A_k=float(row["A_k"]),
            a_k=float(row["a_k"]), tau_k=float(row["tau_k"]),
            L_hat=None if math.isnan(l_hat) else l_hat,
            value_calls=int(row["oracle_value_calls"]),
            grad_calls=int(row["oracle_grad_calls"]),
            block_min_calls=int(row["block_min_calls"]),
            wall_time=float(row["wall_time_s"])))
    return trace


def parse_facts(path) -> dict:
    """Read a flat ``key = value`` facts file (# or ; comments allowed)."""
    facts = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad facts line: {raw!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "kind":
            facts[key] = val
        elif key == "n":
            facts[key] = int(val)
        else:
            facts[key] = float(val)
    return facts


# ---------------------------------------------------------------------------
# certificates
# ---------------------------------------------------------------------------


def _fact(facts: dict, key: str):
    if key not in facts or facts[key] is None:
        raise MissingFact(key)
    return facts[key]


def _bound_check(pairs, rel_slack=REL_SLACK, scale=1.0):
    """Check observed <= bound over (observed, bound) pairs.

    Returns (passed, max relative violation, count).  The absolute epsilon
    covers floating-point noise when both sides approach zero.
    """
    worst = 0.0
    passed = True
    count = 0
    for observed, bound in pairs:
        count += 1
        worst = max(worst, (observed - bound) / max(abs(bound), 1e-300))
        if observed > bound + rel_slack * abs(bound) + 1e-12 * max(1.0, abs(scale)):
            passed = False
    return passed, worst, count


def _check_estimate_sequence(trace, facts):
    if any(rec.psi_at_v is None for rec in trace):
        raise MissingFact("psi accumulators (runtime traces only)")
    worst = 0.0
    for rec in trace:
        lhs = rec.A_k * rec.f_val
        rhs = rec.psi_at_v
        scale = max(1.0, abs(lhs), abs(rhs))
        worst = max(worst, (lhs - rhs) / scale)
    return worst <= PSI_SLACK, worst, len(trace)


def _check_rate_envelope(trace, facts):
    L = _fact(facts, "L")
    R = _fact(facts, "R")
    f_star = _fact(facts, "f_star")
    pairs = [(rec.f_val - f_star, 2.0 * L * R * R / (rec.k * rec.k)) for rec in trace]
    return _bound_check(pairs, scale=trace[0].f_val - f_star if trace else 1.0)


def _check_main_theorem(trace, facts):
    n = _fact(facts, "n")
    L = _fact(facts, "L")
    R = _fact(facts, "R")
    f_star = _fact(facts, "f_star")
    mu = facts.get("mu_solver", 0.0)
    pairs = [(rec.f_val - f_star, main_theorem_bound(rec.k, n, L, R, mu))
             for rec in trace]
    return _bound_check(pairs, scale=trace[0].f_val - f_star if trace else 1.0)


def _check_pl(trace, facts):
    mu = _fact(facts, "mu_true")
    f0 = _fact(facts, "f0")
    f_star = _fact(facts, "f_star")
    if facts.get("mu_solver", 0.0) > 0.0:
        raise MissingFact("pl certificate applies to mu = 0 runs")
    bounds = lemma1_certificate(trace, mu, f0, f_star)
    pairs = [(rec.f_val - f_star, b) for rec, b in zip(trace, bounds)]
    return _bound_check(pairs, scale=f0 - f_star)


def _check_ak_growth(trace, facts):
    n = _fact(facts, "n")
    L = _fact(facts, "L")
    mu = facts.get("mu_solver", 0.0)
    bounds = ak_growth_certificate(trace, n, L, mu)
    # lower bound: A_k >= bound, i.e. -A_k <= -bound
    pairs = [(-rec.A_k, -b) for rec, b in zip(trace, bounds)]
    return _bound_check(pairs, scale=max((abs(b) for b in bounds), default=1.0))


def _check_coefficient_identity(trace, facts):
    worst = 0.0
    for rec in trace:
        if rec.L_hat is None:
            raise MissingFact("accepted prox weight (L_hat column)")
        worst = max(worst, abs(rec.a_k ** 2 * rec.L_hat - rec.A_k) / rec.A_k)
    return worst <= COEFF_TOL, worst, len(trace)


def _check_ms_condition(trace, facts):
    if any(rec.ms_lhs is None or rec.ms_rhs is None for rec in trace):
        raise MissingFact("stop-inequality residuals (runtime traces only)")
    worst = 0.0
    for rec in trace:
        worst = max(worst, (rec.ms_lhs - rec.ms_rhs) / max(rec.ms_rhs, 1e-300))
    return worst <= 0.0, worst, len(trace)


_CHECKS = {
    "agmsdr": (
        ("estimate_sequence", _check_estimate_sequence),
        ("rate_envelope", _check_rate_envelope),
        ("pl_certificate", _check_pl),
    ),
    "aam": (
        ("estimate_sequence", _check_estimate_sequence),
        ("main_theorem", _check_main_theorem),
        ("ak_growth", _check_ak_growth),
        ("pl_certificate", _check_pl),
    ),
    "catalyst": (
        ("coefficient_identity", _check_coefficient_identity),
        ("ms_condition", _check_ms_condition),
    ),
    "sinkhorn": (),
}


def verify_certificates(trace, facts: dict, method: str = "") -> list[CertResult]:
    """Run every certificate applicable to ``facts['kind']`` on a trace.

    Facts may carry: kind, n, L, R, f_star, f0, mu_true (strong convexity of
    the problem), mu_solver (parameter the solver ran with).  Certificates
    whose constants are unavailable are skipped and reported, not failed.
    """
    kind = facts.get("kind", "agmsdr")
    if kind not in _CHECKS:
        raise ValueError(f"unknown method kind {kind!r}")
    results = []
    for name, fn in _CHECKS[kind]:
        if not trace:
            results.append(CertResult(method, name, None, detail="empty trace"))
            continue
        try:
            passed, worst, count = fn(trace, facts)
            results.append(CertResult(method, name, bool(passed), worst, count))
        except MissingFact as exc:
            results.append(CertResult(method, name, None, detail=f"missing fact: {exc.args[0]}"))
        except InvalidBound as exc:
            results.append(CertResult(method, name, False, math.inf, len(trace), str(exc)))
    return results


# ---------------------------------------------------------------------------
# experiment execution
# ---------------------------------------------------------------------------


def build_problem(spec):
    """Instantiate the configured problem family (deterministic per seed)."""
    if spec.family == "split_quadratic":
        return generate_quadratic(spec.dim, spec.kappa, spec.kappa1,
                                  spec.kappa2, seed=spec.seed)
    if spec.family == "quadratic":
        return generate_quadratic(spec.dim, spec.kappa, spec.kappa1,
                                  spec.kappa2, seed=spec.seed).assembled()
    if spec.family == "eot":
        return desk_eot_instance(spec.n, spec.gamma, seed=spec.seed,
                                 cost_scale=spec.cost_scale)
    raise ConfigError(f"unknown problem family {spec.family!r}")


def _check_compat(mspec, oracle):
    if mspec.kind == "sinkhorn" and not isinstance(oracle, EntropicOTDual):
        raise ConfigError(f"{mspec.name}: sinkhorn needs the eot family")
    if mspec.kind == "aam" and not oracle.has_block_minimize:
        raise ConfigError(f"{mspec.name}: aam needs a block-minimizable problem")
    if mspec.kind == "agmsdr" and mspec.variant == "known_L" and oracle.known_L is None:
        raise ConfigError(f"{mspec.name}: known_L variant needs a known Lipschitz constant")


def _run_one(mspec, oracle, x0, run_spec) -> MethodResult:
    stop = StoppingRule(grad_tol_rel=run_spec.grad_tol_rel)
    budget = run_spec.call_budget or None
    result = MethodResult(name=mspec.name, kind=mspec.kind)
    t0 = time.perf_counter()
    try:
        if mspec.kind == "agmsdr":
            x, tr = run_agmsdr(oracle, x0, variant=mspec.variant, stop=stop,
                               max_iters=run_spec.max_iters, call_budget=budget)
        elif mspec.kind == "aam":
            L = oracle.known_L if mspec.mode == "known_L" else None
            x, tr = run_aam(oracle, x0, mode=mspec.mode, stop=stop,
                            max_iters=run_spec.max_iters, L=L, mu=mspec.mu,
                            call_budget=budget)
        elif mspec.kind == "sinkhorn":
            n = oracle.N
            x, tr = run_sinkhorn(oracle, x0[:n], x0[n:], stop=stop,
                                 max_iters=run_spec.max_iters, call_budget=budget)
        elif mspec.kind == "catalyst":
            cfg = CatalystConfig(L0=mspec.L0, L_u=mspec.L_u, L_d=mspec.L_d,
                                 alpha=mspec.alpha, beta=mspec.beta,
                                 gamma=mspec.gamma, max_outer=run_spec.max_iters,
                                 inner_budget=mspec.inner_budget)
            x, tr = run_catalyst(oracle, x0, cfg, stop=stop, call_budget=budget)
        else:
            raise ConfigError(f"unknown kind {mspec.kind!r}")
        result.trace, result.x_final = tr, x
    except ConfigError:
        raise
    except Exception as exc:  # recorded per-method; other methods continue
        result.error = f"{type(exc).__name__}: {exc}"
    result.elapsed = time.perf_counter() - t0
    return result


def _base_facts(oracle, x0) -> tuple[dict, float, bool]:
    """Problem constants plus (f_star, is_proxy)."""
    facts: dict = {}
    if isinstance(oracle, (QuadraticProblem, SplitQuadraticProblem)):
        facts["L"] = oracle.known_L
        facts["mu_true"] = oracle.known_mu
        x_star = oracle.solution()
        facts["R"] = float(np.linalg.norm(np.asarray(x0) - x_star))
        facts["f_star"] = oracle.f_star()
        if oracle.partition is not None:
            facts["n"] = oracle.partition.n
        return facts, facts["f_star"], False
    if isinstance(oracle, EntropicOTDual):
        facts["n"] = 2
        return facts, math.nan, True
    return facts, math.nan, True


def run_experiment(config: ExperimentConfig) -> RunArtifact:
    """Run all configured methods, verify certificates, write artifacts."""
    root = os.environ.get("BENCH_OUTPUT_ROOT", "")
    out_dir = Path(root) / config.run.output_dir if root else Path(config.run.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    oracle = build_problem(config.problem)
    for mspec in config.methods:
        _check_compat(mspec, oracle)
    x0 = np.zeros(oracle.dim)
    with oracle.paused_counters():
        f0 = oracle.value(x0)

    method_results = [_run_one(m, oracle, x0, config.run) for m in config.methods]

    facts, f_star, is_proxy = _base_facts(oracle, x0)
    if is_proxy:
        finals = [rec.f_val for res in method_results for rec in res.trace]
        f_star = min(finals, default=f0)
    facts["f_star"] = f_star
    facts["f0"] = f0

    cert_results: list[CertResult] = []
    if config.run.certificates:
        for mspec, res in zip(config.methods, method_results):
            if res.error is not None:
                continue
            mfacts = dict(facts)
            mfacts["kind"] = mspec.kind
            if mspec.kind == "aam":
                mfacts["mu_solver"] = mspec.mu
            if is_proxy:
                # a proxy optimum cannot support gap-bound certificates
                mfacts.pop("f_star", None)
                mfacts.pop("f0", None)
            cert_results.extend(verify_certificates(res.trace, mfacts, res.name))

    trace_csvs = {}
    for res in method_results:
        path = out_dir / f"{res.name}.csv"
        write_trace_csv(path, res.trace, f_star, timing=config.run.timing)
        trace_csvs[res.name] = path

    cert_csv = out_dir / "certificates.csv"
    lines = ["method,certificate,status,max_violation,checked,detail"]
    for c in cert_results:
        lines.append(f"{c.method},{c.name},{c.status},{_fmt(c.max_violation)},"
                     f"{c.checked},{c.detail}")
    cert_csv.write_text("\n".join(lines) + "\n")

    svg_path = None
    plot_traces = {res.name: res.trace for res in method_results if res.trace}
    if plot_traces:
        svg_path = out_dir / "plot.svg"
        emit_plot(plot_traces, svg_path, x_axis=config.run.x_axis,
                  y_axis=config.run.y_axis, f_star=f_star)

    (out_dir / "config.ini").write_text(config.raw_text)

    ok = all(res.error is None for res in method_results) and \
        all(c.passed is not False for c in cert_results)

    summary_path = out_dir / "summary.txt"
    summary = [f"problem: {config.problem.family} (seed {config.problem.seed})",
               f"f_star: {f_star!r} ({'best-found proxy' if is_proxy else 'direct solve'})",
               f"f0: {f0!r}", ""]
    for res in method_results:
        if res.error:
            summary.append(f"[{res.name}] ERROR after {res.elapsed:.2f}s: {res.error}")
            continue
        last = res.trace[-1] if res.trace else None
        gap = (last.f_val - f_star) if last else 0.0
        summary.append(
            f"[{res.name}] iters={len(res.trace)} f={last.f_val if last else f0!r} "
            f"gap={gap:.6g} grad_calls={last.grad_calls if last else 0} "
            f"block_min_calls={last.block_min_calls if last else 0} "
            f"time={res.elapsed:.2f}s")
    summary.append("")
    for c in cert_results:
        detail = f" ({c.detail})" if c.detail else ""
        summary.append(f"CERT {c.method}/{c.name}: {c.status} "
                       f"max_violation={c.max_violation:.3g} checked={c.checked}{detail}")
    summary.append("")
    summary.append(f"result: {'OK' if ok else 'FAILED'}")
    summary_path.write_text("\n".join(summary) + "\n")

    return RunArtifact(out_dir=out_dir, trace_csvs=trace_csvs, cert_csv=cert_csv,
                       svg_path=svg_path, summary_path=summary_path,
                       cert_results=cert_results, method_results=method_results,
                       f_star=f_star, f_star_is_proxy=is_proxy, ok=ok)
