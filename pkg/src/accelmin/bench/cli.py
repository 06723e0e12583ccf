"""Benchmark command line.

Subcommands::

    bench run <config.ini>            run an experiment, write artifacts
    bench verify <trace.csv> <facts>  re-check certificates on a saved trace
    bench list-problems               describe the shipped problem families

``bench run`` exits 0 iff every enabled certificate passed and no method
errored.  Set ``BENCH_OUTPUT_ROOT`` to relocate output directories.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, parse_config
from .runner import parse_facts, read_trace_csv, run_experiment, verify_certificates

_PROBLEMS = """\
problem families (select with [problem] family = ...):

  quadratic        f(z) = ||W z - b||^2 with symmetric positive-definite W.
                   Random instance with controlled conditioning; keys:
                   dim (even), kappa (cond W), kappa1/kappa2 (cond of the
                   diagonal blocks used during generation), seed.

  split_quadratic  The same objective split into two equal coordinate
                   blocks with exact per-block minimizers (normal-equation
                   solves); supports alternating minimization.

  eot              Entropic optimal-transport dual over potentials (u, v):
                   gamma * (ln(1^T B(u,v) 1) - <u,r> - <v,c>) with
                   B_ij = exp(u_i + v_j - C_ij/gamma).  Keys: n (marginal
                   size), gamma, seed.  Cost: normalized squared distances
                   on a 1-D grid; marginals: smoothed random histograms.
                   Exact block minimization = log-domain matrix scaling,
                   so the sinkhorn method runs on this family.
"""


def _cmd_run(args) -> int:
    try:
        config = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        artifact = run_experiment(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(artifact.summary_path.read_text(), end="")
    print(f"artifacts in {artifact.out_dir}")
    return 0 if artifact.ok else 1


def _cmd_verify(args) -> int:
    try:
        trace = read_trace_csv(args.trace)
        facts = parse_facts(args.facts)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    results = verify_certificates(trace, facts, method=args.trace)
    failed = False
    for c in results:
        detail = f" ({c.detail})" if c.detail else ""
        print(f"CERT {c.name}: {c.status} max_violation={c.max_violation:.3g} "
              f"checked={c.checked}{detail}")
        failed = failed or c.passed is False
    if not results:
        print("no certificates apply to this method kind")
    return 1 if failed else 0


def _cmd_list_problems(_args) -> int:
    print(_PROBLEMS, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Run and verify first-order method comparison experiments.",
        epilog="Environment: BENCH_OUTPUT_ROOT prefixes relative output "
               "directories from the config.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    p_run.add_argument("config", help="INI config (see the packaged examples)")
    p_run.set_defaults(fn=_cmd_run)

    p_ver = sub.add_parser("verify", help="re-check certificates on a saved CSV trace")
    p_ver.add_argument("trace", help="trace CSV written by `bench run`")
    p_ver.add_argument("facts", help="key = value file: kind plus the problem "
                                     "constants (n, L, R, f_star, f0, mu_true, mu_solver)")
    p_ver.set_defaults(fn=_cmd_verify)

    p_list = sub.add_parser("list-problems", help="describe the shipped problem families")
    p_list.set_defaults(fn=_cmd_list_problems)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
