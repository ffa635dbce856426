"""Validation-set selection of the output size k.

The encoder and index are frozen; tuning only sweeps k over a grid and
keeps the value with the best F1 (smallest k on ties).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

from .annotator import AnnotatorConfig, Target, TrainingCorpusIndex, label_similarity_ranking, neighbor_vote_ranking
from .core import DocumentRecord, PredictionSet
from .errors import EmptyValidationSet, GoldOutsideTaxonomy, MissingEmbedding, MissingGold
from .label_index import SemanticIndex, check_k
from .metrics import MacroUniverse, confusion_counts, macro_f1, micro_f1

Objective = Literal["micro", "macro"]
DEFAULT_K_GRID = tuple(range(1, 21))


@dataclass(frozen=True)
class TuningSpec:
    k_grid: tuple[int, ...] = DEFAULT_K_GRID
    objective: Objective = "micro"
    strategy: str = "label_similarity"
    vote_neighbors: int = 10
    threshold: float | None = None
    macro_average: MacroUniverse = "support"

    def __post_init__(self) -> None:
        grid = tuple(self.k_grid)
        object.__setattr__(self, "k_grid", grid)
        if not grid:
            raise ValueError("k_grid must not be empty")
        for k in grid:
            check_k(k)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("k_grid must be strictly increasing")
        if self.objective not in ("micro", "macro"):
            raise ValueError(f"unknown objective {self.objective!r}")

    def config(self, k: int) -> AnnotatorConfig:
        return AnnotatorConfig(self.strategy, k, self.vote_neighbors, self.threshold)


@dataclass
class TuningReport:
    best_k: int
    per_k_scores: list[tuple[int, float, float]] = field(default_factory=list)
    objective_used: str = "micro"

    def score_at(self, k: int) -> float:
        for kk, mi, ma in self.per_k_scores:
            if kk == k:
                return mi if self.objective_used == "micro" else ma
        raise KeyError(k)

    def to_json(self) -> dict:
        return {
            "best_k": self.best_k,
            "objective": self.objective_used,
            "per_k": [{"k": k, "micro_f1": mi, "macro_f1": ma} for k, mi, ma in self.per_k_scores],
        }

    def table(self) -> str:
        col = "micro_f1" if self.objective_used == "micro" else "macro_f1"
        lines = [f"{'k':>4} {col:>9}"]
        for k, mi, ma in self.per_k_scores:
            mark = " *" if k == self.best_k else ""
            lines.append(f"{k:>4} {100 * (mi if self.objective_used == 'micro' else ma):>9.2f}{mark}")
        return "\n".join(lines)


def _target_labels(target: Target) -> frozenset[str]:
    return frozenset(target.ids) if isinstance(target, SemanticIndex) else target.labels


def tune_k(val_docs: Sequence[DocumentRecord], target: Target, spec: TuningSpec = TuningSpec()) -> TuningReport:
    """Sweep ``spec.k_grid`` on ``val_docs`` and return the F1-maximizing k.

    Every document is ranked once at the largest k; predictions at smaller
    k are prefixes of that ranking, exactly as a fresh prediction would be.
    """
    if not val_docs:
        raise EmptyValidationSet("validation set is empty")
    if isinstance(target, SemanticIndex) != (spec.strategy == "label_similarity"):
        raise TypeError(f"strategy {spec.strategy!r} does not match target {type(target).__name__}")
    labels = _target_labels(target)
    for d in val_docs:
        if d.gold_labels is None:
            raise MissingGold(f"validation document {d.id!r} has no gold labels")
        if d.embedding is None:
            raise MissingEmbedding(d.id)
        for l in sorted(d.gold_labels):
            if l not in labels:
                raise GoldOutsideTaxonomy(d.id, l)

    k_max = spec.k_grid[-1]
    rankings = []
    for d in val_docs:
        if isinstance(target, TrainingCorpusIndex):
            ranked = neighbor_vote_ranking(d.embedding, target, spec.vote_neighbors)
        else:
            ranked = label_similarity_ranking(d.embedding, target, k_max)
        rankings.append(ranked)

    per_k = []
    for k in spec.k_grid:
        preds = []
        for d, ranked in zip(val_docs, rankings):
            items = ranked[:k]
            if spec.threshold is not None:
                items = [it for it in items if it.score >= spec.threshold]
            preds.append(PredictionSet(d.id, tuple(items)))
        c = confusion_counts(preds, val_docs, labels)
        per_k.append((k, micro_f1(c), macro_f1(c, labels, spec.macro_average)))

    col = 1 if spec.objective == "micro" else 2
    best = max(per_k, key=lambda row: (row[col], -row[0]))
    return TuningReport(best[0], per_k, spec.objective)
