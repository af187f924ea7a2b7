"""Deterministic multi-agent treatment-board consensus simulator.

Seven role-specialized policy agents score a shared case, their
confidence-weighted preferences form a consensus matrix whose agreement
is measured with Kendall's coefficient of concordance, discordant agents
revise over up to three rounds, every opinion carries a graded evidence
chain, and from-scratch reinforcement learners optimize the interaction
policy over the induced decision process.
"""

from .config import AppConfig, load_config
from .consensus import (
    ConsultationResult,
    aggregate_baselines,
    build_matrix,
    discordance,
    kendall_w,
    normalize_preferences,
    objective_j,
    rank_row,
    run_consultation,
    weight_entry,
)
from .domain import (
    AuditLog,
    ConsensusMatrix,
    EvidenceChain,
    EvidenceItem,
    FixedClock,
    Opinion,
    PatientCase,
    TreatmentOption,
    default_treatments,
    flatten_state,
    validate_case,
)
from .agents import PolicyAgent, make_team, role_preference
from .evidence import CorpusStore, assess_grade, build_chain, construct_query
from .sim import CohortMetrics, evaluate_policy, generate_case, run_cohort

__version__ = "0.1.0"

__all__ = [
    "AppConfig", "load_config",
    "ConsultationResult", "aggregate_baselines", "build_matrix",
    "discordance", "kendall_w", "normalize_preferences", "objective_j",
    "rank_row", "run_consultation", "weight_entry",
    "AuditLog", "ConsensusMatrix", "EvidenceChain", "EvidenceItem",
    "FixedClock", "Opinion", "PatientCase", "TreatmentOption",
    "default_treatments", "flatten_state", "validate_case",
    "PolicyAgent", "make_team", "role_preference",
    "CorpusStore", "assess_grade", "build_chain", "construct_query",
    "CohortMetrics", "evaluate_policy", "generate_case", "run_cohort",
    "__version__",
]
