"""Document -> label-set prediction.

Two strategies:

* ``label_similarity``: rank taxonomy labels by cosine similarity between the
  document embedding and each label-description embedding; keep the top k.
* ``neighbor_vote``: find the nearest training documents and let each vote
  for its gold labels with weight equal to its cosine similarity.

Both only ever emit ids stored in an index built from the taxonomy, so a
label outside the taxonomy cannot be produced.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from typing import Literal, NamedTuple, Sequence, Union

import numpy as np

from .core import DocumentRecord, PredictionSet, ScoredLabel, Taxonomy, normalize_rows, op_counter, row_dots, validate_vector
from .errors import AnnotatorError, EmptyCorpus, GoldOutsideTaxonomy, MissingEmbedding, NoGoldLabels
from .label_index import SemanticIndex, check_k, rank_order

logger = logging.getLogger(__name__)

Strategy = Literal["label_similarity", "neighbor_vote"]
STRATEGIES = ("label_similarity", "neighbor_vote")


@dataclass(frozen=True)
class AnnotatorConfig:
    """Prediction settings.

    ``threshold`` switches the output-size rule from fixed top-k to "every
    label scoring at least ``threshold``, at most k of them". It is off by
    default; fixed top-k is the reference behaviour.
    """

    strategy: Strategy = "label_similarity"
    k: int = 5
    vote_neighbors: int = 10
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        check_k(self.k)
        if isinstance(self.vote_neighbors, bool) or not isinstance(self.vote_neighbors, int) or self.vote_neighbors < 1:
            raise ValueError("vote_neighbors must be a positive integer")


class TrainingCorpusIndex:
    """Normalized training-document embeddings plus their gold label sets."""

    def __init__(self, docs: Sequence[DocumentRecord], taxonomy: Taxonomy | Sequence[str]):
        if not docs:
            raise EmptyCorpus("training corpus is empty")
        allowed = frozenset(taxonomy.ids if isinstance(taxonomy, Taxonomy) else taxonomy)
        ids, vecs, gold = [], [], []
        dim = None
        for d in docs:
            if d.embedding is None:
                raise MissingEmbedding(d.id)
            if d.gold_labels is None:
                raise NoGoldLabels(f"training document {d.id!r} has no gold labels")
            for l in sorted(d.gold_labels):
                if l not in allowed:
                    raise GoldOutsideTaxonomy(d.id, l)
            v = validate_vector(d.embedding, dim)
            dim = v.size
            ids.append(d.id)
            vecs.append(v)
            gold.append(tuple(sorted(d.gold_labels)))
        self.ids: tuple[str, ...] = tuple(ids)
        self.dim: int = dim
        self.labels = allowed
        self.gold: tuple[tuple[str, ...], ...] = tuple(gold)
        self.matrix = normalize_rows(np.vstack(vecs))
        self.matrix.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    @cached_property
    def _tie_rank(self) -> np.ndarray:
        rank = np.empty(len(self.ids), dtype=np.int64)
        for r, i in enumerate(sorted(range(len(self.ids)), key=self.ids.__getitem__)):
            rank[i] = r
        return rank

    def neighbors(self, query: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Positions and similarities of the ``n`` nearest documents."""
        q = validate_vector(query, self.dim)
        q = q / np.sqrt(np.dot(q, q))
        op_counter.add("similarities", len(self.ids))
        s = np.clip(row_dots(self.matrix, q), -1.0, 1.0)
        order = rank_order(s, self._tie_rank)[:n]
        return order, s[order]


Target = Union[SemanticIndex, TrainingCorpusIndex]


def _apply_size_rule(ranked: list[ScoredLabel], k: int, threshold: float | None) -> list[ScoredLabel]:
    ranked = ranked[:k]
    if threshold is not None:
        ranked = [it for it in ranked if it.score >= threshold]
    return ranked


def label_similarity_ranking(doc_vec: np.ndarray, index: SemanticIndex, k: int) -> list[ScoredLabel]:
    return index.search(doc_vec, k)


def neighbor_vote_ranking(doc_vec: np.ndarray, corpus: TrainingCorpusIndex, vote_neighbors: int) -> list[ScoredLabel]:
    """All labels carried by the nearest documents, ranked by vote weight.

    A label's score is the summed similarity of the neighbors carrying it,
    divided by the number of neighbors consulted, which keeps it in [-1, 1]
    without changing the order.
    """
    pos, sims = corpus.neighbors(doc_vec, vote_neighbors)
    weights: dict[str, float] = defaultdict(float)
    for p, s in zip(pos, sims):
        for label in corpus.gold[p]:
            weights[label] += float(s)
    n = len(pos)
    return [ScoredLabel(l, w / n) for l, w in sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))]


def predict_label_similarity(doc_vec: np.ndarray, index: SemanticIndex, k: int, doc_id: str = "", threshold: float | None = None) -> PredictionSet:
    """Top-k labels by cosine similarity to the document embedding."""
    return PredictionSet(doc_id, tuple(_apply_size_rule(index.search(doc_vec, k), k, threshold)))


def predict_neighbor_vote(doc_vec: np.ndarray, corpus: TrainingCorpusIndex, config: AnnotatorConfig, doc_id: str = "") -> PredictionSet:
    ranked = neighbor_vote_ranking(doc_vec, corpus, config.vote_neighbors)
    return PredictionSet(doc_id, tuple(_apply_size_rule(ranked, config.k, config.threshold)))


def predict(doc_vec: np.ndarray, target: Target, config: AnnotatorConfig, doc_id: str = "") -> PredictionSet:
    """Dispatch on ``config.strategy``; ``target`` must match the strategy."""
    if config.strategy == "label_similarity":
        if not isinstance(target, SemanticIndex):
            raise TypeError("label_similarity needs a SemanticIndex")
        return predict_label_similarity(doc_vec, target, config.k, doc_id, config.threshold)
    if not isinstance(target, TrainingCorpusIndex):
        raise TypeError("neighbor_vote needs a TrainingCorpusIndex")
    return predict_neighbor_vote(doc_vec, target, config, doc_id)


class BatchError(NamedTuple):
    doc_id: str
    error: AnnotatorError


class BatchResult(NamedTuple):
    predictions: list[PredictionSet]
    errors: list[BatchError]


def predict_batch(docs: Sequence[tuple[str, np.ndarray]], target: Target, config: AnnotatorConfig, *, strict: bool = True) -> BatchResult:
    """Predict every ``(doc_id, vector)`` pair, preserving input order.

    In strict mode the first failure is re-raised with the document id
    prepended to its message. In lenient mode failures are collected in
    ``errors`` and the document is skipped.
    """
    preds, errors = [], []
    for doc_id, vec in docs:
        try:
            preds.append(predict(vec, target, config, doc_id))
        except AnnotatorError as exc:
            if strict:
                exc.args = (f"document {doc_id!r}: {exc}",) + exc.args[1:]
                raise
            logger.warning("skipping document %r: %s", doc_id, exc)
            errors.append(BatchError(doc_id, exc))
    return BatchResult(preds, errors)
