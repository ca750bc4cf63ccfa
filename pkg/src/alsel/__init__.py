"""Deterministic pool-based active-learning sentence selection for MT."""

__version__ = "0.1.0"

from .corpus import (
    CleanReport,
    FoldSpec,
    MonoPool,
    ParallelCorpus,
    SentenceRecord,
    SplitSet,
    clean,
    load_parallel,
    materialize_split,
    split_folds,
)
from .scorers import (
    CandidateRecord,
    MockBackend,
    ModelEndpoint,
    ScoredCandidate,
    qe_priority,
    rttl_score,
    score_pool,
)
from .selection import (
    LengthDistribution,
    SelectionBatch,
    StrataQuota,
    allocate_strata,
    build_length_histogram,
    select_random,
    select_stratified,
    select_top_k,
)
from .al_loop import (
    ExperimentDir,
    ExperimentState,
    IterationManifest,
    LoopConfig,
    run_iteration,
    should_stop,
)
from .analytics import BatchStats, DistributionDivergence, batch_stats, divergence, emit_report

__all__ = [
    "CleanReport",
    "FoldSpec",
    "MonoPool",
    "ParallelCorpus",
    "SentenceRecord",
    "SplitSet",
    "clean",
    "load_parallel",
    "materialize_split",
    "split_folds",
    "CandidateRecord",
    "MockBackend",
    "ModelEndpoint",
    "ScoredCandidate",
    "qe_priority",
    "rttl_score",
    "score_pool",
    "LengthDistribution",
    "SelectionBatch",
    "StrataQuota",
    "allocate_strata",
    "build_length_histogram",
    "select_random",
    "select_stratified",
    "select_top_k",
    "ExperimentDir",
    "ExperimentState",
    "IterationManifest",
    "LoopConfig",
    "run_iteration",
    "should_stop",
    "BatchStats",
    "DistributionDivergence",
    "batch_stats",
    "divergence",
    "emit_report",
]
