"""Closed-vocabulary multi-label annotation by cosine retrieval."""

from .annotator import (
    AnnotatorConfig,
    TrainingCorpusIndex,
    predict,
    predict_batch,
    predict_label_similarity,
    predict_neighbor_vote,
)
from .audit import AuditReport, audit_predictions, validate_or_reject
from .core import (
    DocumentRecord,
    LabelEntry,
    PredictionSet,
    ScoredLabel,
    Taxonomy,
    cosine_similarity,
    l2_normalize,
    validate_vector,
)
from .cost import PRESETS, CostParams, cost_report, flops_finetune, flops_retrieval
from .dataset_io import SplitSpec, corpus_stats, load_documents, load_taxonomy, subsample_train
from .estimators import LabelSimilarityAnnotator, NeighborVoteAnnotator
from .label_index import SemanticIndex, add_label, build_index, index_stats, remove_label, search_top_k
from .metrics import EvalReport, confusion_counts, evaluate, macro_f1, micro_f1
from .tuner import TuningReport, TuningSpec, tune_k

__version__ = "0.1.0"

__all__ = [
    "AnnotatorConfig",
    "AuditReport",
    "CostParams",
    "DocumentRecord",
    "EvalReport",
    "LabelEntry",
    "LabelSimilarityAnnotator",
    "NeighborVoteAnnotator",
    "PRESETS",
    "PredictionSet",
    "ScoredLabel",
    "SemanticIndex",
    "SplitSpec",
    "Taxonomy",
    "TrainingCorpusIndex",
    "TuningReport",
    "TuningSpec",
    "add_label",
    "audit_predictions",
    "build_index",
    "confusion_counts",
    "corpus_stats",
    "cosine_similarity",
    "cost_report",
    "evaluate",
    "flops_finetune",
    "flops_retrieval",
    "index_stats",
    "l2_normalize",
    "load_documents",
    "load_taxonomy",
    "macro_f1",
    "micro_f1",
    "predict",
    "predict_batch",
    "predict_label_similarity",
    "predict_neighbor_vote",
    "remove_label",
    "search_top_k",
    "subsample_train",
    "tune_k",
    "validate_or_reject",
    "validate_vector",
]
