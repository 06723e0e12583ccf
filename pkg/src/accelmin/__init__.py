"""Accelerated first-order methods over block oracles.

Solvers: an accelerated gradient method driven by exact one-dimensional
searches (two step variants), its generalization to exact alternating
minimization over coordinate blocks, and an adaptive catalyst wrapper that
accelerates a plain gradient method through regularized subproblems.  All
three run without knowing a strong-convexity constant; the certificate
helpers bound their convergence after the fact.

Problems: dense and block-split quadratics with controlled conditioning and
the entropic optimal-transport dual, whose exact block updates reproduce the
classical matrix-scaling (Sinkhorn) iteration.
"""

from .core import (
    BlockPartition,
    BracketFailure,
    DegenerateStep,
    DimensionMismatch,
    InvalidBound,
    InvalidCoefficient,
    NonFiniteValue,
    NoRoot,
    Oracle,
    StoppingRule,
    TraceRecord,
    finite_diff_gradient,
    line_search_ray,
    line_search_unit_interval,
    solve_coefficient_known_L,
    solve_sufficient_decrease,
)
from .agmsdr import (
    AgmsdrState,
    agmsdr_step_known_L,
    agmsdr_step_linesearch,
    lemma1_certificate,
    local_lipschitz_estimate,
    run_agmsdr,
)
from .aam import (
    AamState,
    BlockMinFailure,
    aam_pl_certificate,
    aam_step,
    ak_growth_certificate,
    main_theorem_bound,
    run_aam,
    select_block,
)
from .catalyst import (
    CatalystConfig,
    CatalystState,
    InnerBudgetExhausted,
    adaptive_gd,
    catalyst_outer_step,
    inner_solve,
    prox_objective,
    run_catalyst,
)
from .problems import (
    EntropicOTDual,
    GenerationFailure,
    QuadraticProblem,
    SplitQuadraticProblem,
    StrongConvexity,
    desk_eot_instance,
    eot_block_minimize,
    eot_grad,
    eot_value,
    generate_quadratic,
    load_problem,
    quad_value_grad,
    run_sinkhorn,
    save_problem,
    split_block_minimize,
    strong_convexity_constant,
)

__version__ = "0.1.0"
