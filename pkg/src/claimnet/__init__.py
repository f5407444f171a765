"""Physician-physician networks from health-insurance consultation claims."""

from .centrality import (
    CentralityVector, ConcordanceReport, Metric, betweenness_centrality, closeness_centrality,
    concordance, dense_core, degree_centrality, eigenvector_centrality, quarterly_centrality_ranking,
)
from .graph import (
    PhysicianGraph, ReferralGraph, build_referral_graph, build_shared_patient_graph, degree_distribution,
    density, slice_graph,
)
from .ingest import (
    ClaimRecord, DateWindow, FilterPolicy, FormatConfig, QuarterKey, describe, filter_valid, parse_claims,
    partition_quarters, validate_physician_id,
)
from .referral import median_gap, mutual_referral, mutual_referral_scores, specialty_pair_summary, top_pairs
from .retention import build_patient_profiles, quarterly_retention_ranking, retention_scatter, retention_scores

__version__ = "0.1.0"
