"""Config-driven benchmark harness: runs method comparisons, verifies rate
certificates, and emits CSV traces plus SVG convergence plots."""

from .config import ConfigError, ExperimentConfig, MethodSpec, ProblemSpec, RunSpec, parse_config
from .runner import RunArtifact, run_experiment, verify_certificates
from .svgplot import emit_plot

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MethodSpec",
    "ProblemSpec",
    "RunSpec",
    "parse_config",
    "RunArtifact",
    "run_experiment",
    "verify_certificates",
    "emit_plot",
]
