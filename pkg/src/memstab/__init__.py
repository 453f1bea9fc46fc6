"""Exponential-stability toolkit for stochastic heat dynamics with memory.

Certificates (mean-square rate sigma and amplitude B, plus the almost-sure
supplement) are built from coefficient envelope data; a spectral
Euler-Maruyama Monte Carlo simulator produces trajectories of the built-in
delayed stochastic heat model; and the verify layer confronts the two.
"""

from .certificate import (
    ASCertificate,
    BoundednessError,
    Certificate,
    HypothesisReport,
    InfeasibleError,
    build_as_certificate,
    build_certificate,
    certificate_json,
    check_gain_margin,
    check_hypotheses,
    gamma2_opt,
    solve_sigma,
    solve_sigma_star,
)
from .model import (
    Attestations,
    DelaySpec,
    GainEnvelope,
    HeatModelSpec,
    InitialSegment,
    ProblemSpec,
    ValidationReport,
    map_heat_to_problem,
    validate_problem,
)
from .simulate import (
    HistoryBuffer,
    LookupRangeError,
    MSCurve,
    PathRecord,
    SimConfig,
    StateRetentionError,
    aggregate_curve,
    em_step,
    init_history,
    integrate_block,
    path_increments,
    run_monte_carlo,
    simulate_path,
)
from .timefn import DivergentIntegralError, TimeFunction
from .verify import (
    CheckRecord,
    DecayFit,
    EnergyResidual,
    VerificationReport,
    check_as_decay,
    check_decay_functional,
    check_ms_bound,
    energy_refinement_study,
    energy_residual,
    fit_decay_rate,
    wilson_lower,
)

__version__ = "0.1.0"

__all__ = [
    "ASCertificate",
    "Attestations",
    "BoundednessError",
    "Certificate",
    "CheckRecord",
    "DecayFit",
    "DelaySpec",
    "DivergentIntegralError",
    "EnergyResidual",
    "GainEnvelope",
    "HeatModelSpec",
    "HistoryBuffer",
    "HypothesisReport",
    "InfeasibleError",
    "InitialSegment",
    "LookupRangeError",
    "MSCurve",
    "PathRecord",
    "ProblemSpec",
    "SimConfig",
    "StateRetentionError",
    "TimeFunction",
    "ValidationReport",
    "VerificationReport",
    "aggregate_curve",
    "build_as_certificate",
    "build_certificate",
    "certificate_json",
    "check_as_decay",
    "check_decay_functional",
    "check_gain_margin",
    "check_hypotheses",
    "check_ms_bound",
    "em_step",
    "energy_refinement_study",
    "energy_residual",
    "fit_decay_rate",
    "gamma2_opt",
    "init_history",
    "integrate_block",
    "map_heat_to_problem",
    "path_increments",
    "run_monte_carlo",
    "simulate_path",
    "solve_sigma",
    "solve_sigma_star",
    "validate_problem",
    "wilson_lower",
]
