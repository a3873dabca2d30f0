"""Metrics, baselines and batch evaluation."""

from .adjudicate import adjudicate, rematch
from .baselines import (
    COSINE_PROPOSAL_THRESHOLD,
    CLIP_PROPOSAL_THRESHOLD,
    TOKEN_LIMIT,
    FixedListProposer,
    LlmProposer,
    WhitespaceTokenizer,
    default_proposal_threshold,
    run_direct_index,
    run_proposal_threshold,
    surviving_proposals,
    truncate_query,
)
from .metrics import EquivalenceConfig, MatchOutcome, distance_metric, object_match
from .records import (
    CARTIER,
    CSV_HEADER,
    DIRECT_INDEX,
    PROPOSAL_THRESHOLD,
    PredictionRecord,
    read_records_csv,
    records_to_csv,
    write_records_csv,
)
from .report import Report, aggregate
from .runner import ALL_METHODS, EvalScene, EvalSettings, MethodSpec, evaluate, evaluate_one

__all__ = [
    "ALL_METHODS",
    "CARTIER",
    "COSINE_PROPOSAL_THRESHOLD",
    "CSV_HEADER",
    "DIRECT_INDEX",
    "EquivalenceConfig",
    "EvalScene",
    "EvalSettings",
    "FixedListProposer",
    "LlmProposer",
    "MatchOutcome",
    "MethodSpec",
    "CLIP_PROPOSAL_THRESHOLD",
    "PROPOSAL_THRESHOLD",
    "PredictionRecord",
    "Report",
    "TOKEN_LIMIT",
    "WhitespaceTokenizer",
    "adjudicate",
    "aggregate",
    "default_proposal_threshold",
    "distance_metric",
    "evaluate",
    "evaluate_one",
    "object_match",
    "read_records_csv",
    "records_to_csv",
    "rematch",
    "run_direct_index",
    "run_proposal_threshold",
    "surviving_proposals",
    "truncate_query",
    "write_records_csv",
]
