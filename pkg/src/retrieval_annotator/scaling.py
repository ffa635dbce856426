"""Accuracy versus training-set size.

For each N: take the first N documents of a seeded shuffle of the training
split, build the neighbour corpus, tune k on the validation split and score
the test split. Label-similarity prediction has no training-set dependence,
so its rows are the same at every N; it is reported as a reference line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .annotator import AnnotatorConfig, TrainingCorpusIndex, predict
from .core import DocumentRecord, Taxonomy
from .dataset_io import SplitSpec, split_corpus, subsample_train
from .label_index import SemanticIndex, build_index
from .metrics import evaluate
from .tuner import DEFAULT_K_GRID, TuningSpec, tune_k


@dataclass(frozen=True)
class ScalingRow:
    n_train: int
    strategy: str
    best_k: int
    micro_f1: float
    macro_f1: float

    def to_json(self) -> dict:
        return {
            "n_train": self.n_train,
            "strategy": self.strategy,
            "best_k": self.best_k,
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
        }


def _score(test: Sequence[DocumentRecord], target, cfg: AnnotatorConfig, taxonomy: Taxonomy):
    preds = [predict(d.embedding, target, cfg, d.id) for d in test]
    return evaluate(preds, test, taxonomy)


def run_scaling(
    docs: Sequence[DocumentRecord],
    taxonomy: Taxonomy,
    sizes: Sequence[int | None],
    split: SplitSpec = SplitSpec(),
    strategy: str = "neighbor_vote",
    *,
    index: SemanticIndex | None = None,
    vote_neighbors: int = 10,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    objective: str = "micro",
) -> list[ScalingRow]:
    """One :class:`ScalingRow` per requested size (``None`` = whole train split)."""
    train, val, test = split_corpus(docs, split)
    spec = TuningSpec(tuple(k_grid), objective, strategy, vote_neighbors)
    if strategy == "label_similarity" and index is None:
        index = build_index(taxonomy)
    rows = []
    for size in sizes:
        n = len(train) if size is None else size
        sample = subsample_train(train, split, n)
        if strategy == "neighbor_vote":
            target = TrainingCorpusIndex(sample, taxonomy)
        else:
            target = index
        report = tune_k(val, target, spec)
        ev = _score(test, target, spec.config(report.best_k), taxonomy)
        rows.append(ScalingRow(n, strategy, report.best_k, ev.micro_f1, ev.macro_f1))
    return rows


def scaling_table(rows: Sequence[ScalingRow]) -> str:
    lines = [f"{'N':>7} {'strategy':<17} {'k*':>3} {'Mi':>6} {'Ma':>6}"]
    for r in rows:
        lines.append(f"{r.n_train:>7} {r.strategy:<17} {r.best_k:>3} {100 * r.micro_f1:>6.2f} {100 * r.macro_f1:>6.2f}")
    return "\n".join(lines)
