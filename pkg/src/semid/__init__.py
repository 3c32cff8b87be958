"""Unique, purely semantic multi-level ids for embedding collections."""
from .alloc import HcProvider, RqProvider, alloc_topk, greedy_chain, hc_candidates, make_provider
from .assign import (
    COMBINATION_ORDER,
    RESIDUAL_SCORE,
    AssignConfig,
    AssignReport,
    RankingStrategy,
    assign,
    assign_ecm,
    assign_greedy,
    assign_rrs,
    assign_suffix,
    enumerate_ecm_candidates,
    score_candidate,
    seed_registry,
)
from .core import (
    CandidateSet,
    CapacityExceeded,
    Codebook,
    CodebookStack,
    DegenerateInput,
    EmbeddingSet,
    ExhaustedCandidates,
    HcNode,
    HcTree,
    SuffixedId,
    UsedIdRegistry,
    capacity_check,
    registry_insert,
)
from .metrics import conflict_stats, distortion_report, rank_displacement, timing_report
from .quantizer import KMeansConfig, kmeans, reconstruct, train_hc, train_rq
from .synth import gen_synthetic

__version__ = "0.1.0"
