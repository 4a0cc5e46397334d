"""Noise-aware l_q recovery: solver, coherence bounds and numerical certification."""

from .audit import ChainTrace, audit_solution_chain, check_active_constraint, check_lemma2
from .bounds import (
    BoundCertificate,
    compare_models,
    cq_constant,
    donoho_c0,
    donoho_c1,
    gamma_of_error,
    gamma_upper_bound_qhalf,
    sparsity_threshold,
)
from .core import (
    Dictionary,
    Observation,
    RecoveryProblem,
    SparseSignal,
    l0_count,
    lq_quasinorm,
    mutual_coherence,
    normalize_columns,
)
from .harness import ExperimentConfig, TrialRecord, generate_instance, run_experiment, summarize
from .prox import scalar_lq_prox
from .solvers import RecoveryResult, SolverConfig, oracle_global, solve_constrained

__version__ = "0.1.0"
