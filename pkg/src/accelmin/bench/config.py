"""Experiment configuration.

Flat INI-style text: a ``[problem]`` section, a ``[run]`` section, and one
``[method <name>]`` section per solver.  Every key is optional with the
defaults below; at least one method section is required.  Example::

    [problem]
    family = split_quadratic   ; quadratic | split_quadratic | eot
    dim = 40                   ; quadratics: even total dimension
    kappa = 1000               ; quadratics: cond(W)
    kappa1 = 10                ; quadratics: cond of the first diagonal block
    kappa2 = 10                ; quadratics: cond of the second diagonal block
    n = 64                     ; eot: marginal size
    gamma = 1.0                ; eot: entropy regularization
    cost_scale = 600           ; eot: largest cost entry
    seed = 0

    [run]
    max_iters = 200            ; per-method iteration cap (outer steps for catalyst)
    call_budget = 0            ; gradient + block-min call cap, 0 = unlimited
    grad_tol_rel = 1e-9        ; stop when ||grad|| <= rel * initial
    output_dir = bench_out     ; created under $BENCH_OUTPUT_ROOT if that is set
    certificates = true        ; verify rate certificates after the runs
    x_axis = oracle_calls      ; oracle_calls | iteration
    y_axis = gap               ; gap | grad_norm
    timing = false             ; write real wall times into the CSV column
                               ; (default keeps artifacts byte-deterministic)

    [method aam]
    kind = aam                 ; agmsdr | aam | sinkhorn | catalyst
    mode = adaptive            ; aam: adaptive | known_L
    mu = 0.0                   ; aam: strong-convexity parameter fed to the solver
    variant = linesearch       ; agmsdr: linesearch | known_L
    ; catalyst keys: L0, alpha, beta, gamma, L_u, L_d, inner_budget
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

__all__ = [
    "ConfigError",
    "ProblemSpec",
    "MethodSpec",
    "RunSpec",
    "ExperimentConfig",
    "parse_config",
    "parse_config_text",
]

FAMILIES = ("quadratic", "split_quadratic", "eot")
KINDS = ("agmsdr", "aam", "sinkhorn", "catalyst")


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ProblemSpec:
    family: str = "split_quadratic"
    dim: int = 40
    kappa: float = 1000.0
    kappa1: float = 10.0
    kappa2: float = 10.0
    n: int = 64
    gamma: float = 1.0
    cost_scale: float = 600.0
    seed: int = 0


@dataclass
class MethodSpec:
    name: str = "method"
    kind: str = "aam"
    variant: str = "linesearch"
    mode: str = "adaptive"
    mu: float = 0.0
    L0: float = 1.0
    alpha: float = 4.0
    beta: float = 2.0
    gamma: float = 1.5
    L_u: float = 1e9
    L_d: float = 1e-6
    inner_budget: int = 5000


@dataclass
class RunSpec:
    max_iters: int = 200
    call_budget: int = 0
    grad_tol_rel: float = 1e-9
    output_dir: str = "bench_out"
    certificates: bool = True
    x_axis: str = "oracle_calls"
    y_axis: str = "gap"
    timing: bool = False


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    run: RunSpec = field(default_factory=RunSpec)
    methods: list = field(default_factory=list)
    raw_text: str = ""


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(section: str, key: str, raw: str, target):
    try:
        if isinstance(target, bool):
            return _BOOL[raw.strip().lower()]
        return type(target)(raw)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


def _fill(section_name: str, parser_section, spec):
    known = {f.name: getattr(spec, f.name) for f in fields(spec)}
    for key, raw in parser_section.items():
        if key == "name":
            continue
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in [{section_name}]")
        setattr(spec, key, _coerce(section_name, key, raw, known[key]))
    return spec


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str  # keep key case (L0, L_u, L_d)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    cfg = ExperimentConfig(raw_text=text)
    for section in parser.sections():
        if section == "problem":
            _fill(section, parser[section], cfg.problem)
        elif section == "run":
            _fill(section, parser[section], cfg.run)
        elif section.startswith("method"):
            name = section[len("method"):].strip() or f"method{len(cfg.methods)}"
            m = MethodSpec(name=name)
            _fill(section, parser[section], m)
            cfg.methods.append(m)
        else:
            raise ConfigError(f"unknown section [{section}]")

    if not cfg.methods:
        raise ConfigError("no [method ...] sections: nothing to run")
    if cfg.problem.family not in FAMILIES:
        raise ConfigError(f"unknown problem family {cfg.problem.family!r}")
    if cfg.run.x_axis not in ("oracle_calls", "iteration"):
        raise ConfigError(f"x_axis must be oracle_calls or iteration")
    if cfg.run.y_axis not in ("gap", "grad_norm"):
        raise ConfigError(f"y_axis must be gap or grad_norm")
    names = [m.name for m in cfg.methods]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate method names: {names}")
    for m in cfg.methods:
        if m.kind not in KINDS:
            raise ConfigError(f"unknown method kind {m.kind!r} for {m.name!r}")
        if m.kind == "agmsdr" and m.variant not in ("linesearch", "known_L"):
            raise ConfigError(f"agmsdr variant must be linesearch or known_L")
        if m.kind == "aam" and m.mode not in ("adaptive", "known_L"):
            raise ConfigError(f"aam mode must be adaptive or known_L")
    return cfg


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read())
