"""Micro/macro precision, recall and F1 for multi-label predictions.

Conventions: any ratio with a zero denominator is 0. Macro scores average
over labels with gold support in the evaluated split (``average="support"``)
or, for sensitivity analysis, over the whole taxonomy (``average="taxonomy"``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Collection, Literal, Sequence, Union

from .core import DocumentRecord, PredictionSet, Taxonomy
from .errors import LabelOutsideTaxonomy, MissingGold, UnknownDoc

MacroUniverse = Literal["support", "taxonomy"]
LabelSpace = Union[Taxonomy, Collection[str]]


def label_ids(taxonomy: LabelSpace) -> list[str]:
    return taxonomy.ids if isinstance(taxonomy, Taxonomy) else sorted(taxonomy)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class LabelConfusion:
    """Per-label true-positive, false-positive and false-negative counts."""

    tp: dict[str, int] = field(default_factory=dict)
    fp: dict[str, int] = field(default_factory=dict)
    fn: dict[str, int] = field(default_factory=dict)
    n_docs: int = 0

    @classmethod
    def zeros(cls, labels: Sequence[str]) -> LabelConfusion:
        return cls({l: 0 for l in labels}, {l: 0 for l in labels}, {l: 0 for l in labels})

    @property
    def labels(self) -> list[str]:
        return list(self.tp)

    def support(self, label: str) -> int:
        return self.tp[label] + self.fn[label]

    def merge(self, other: LabelConfusion) -> LabelConfusion:
        out = LabelConfusion.zeros(sorted(set(self.tp) | set(other.tp)))
        for src in (self, other):
            for l in src.tp:
                out.tp[l] += src.tp[l]
                out.fp[l] += src.fp[l]
                out.fn[l] += src.fn[l]
        out.n_docs = self.n_docs + other.n_docs
        return out


def confusion_counts(preds: Sequence[PredictionSet], gold: Sequence[DocumentRecord], taxonomy: LabelSpace) -> LabelConfusion:
    """Set-based confusion counts, matched by document id.

    Gold documents with no prediction count as an empty prediction.

    Raises:
        UnknownDoc: a prediction names a document absent from ``gold``.
        MissingGold: the matching gold document carries no labels.
        LabelOutsideTaxonomy: a predicted or gold label is not in ``taxonomy``.
    """
    gold_by_id = {d.id: d for d in gold}
    pred_by_id: dict[str, PredictionSet] = {}
    for p in preds:
        if p.doc_id not in gold_by_id:
            raise UnknownDoc(f"prediction for unknown document {p.doc_id!r}")
        pred_by_id[p.doc_id] = p
    ids = label_ids(taxonomy)
    known = set(ids)
    c = LabelConfusion.zeros(ids)
    for d in gold:
        if d.gold_labels is None:
            raise MissingGold(f"document {d.id!r} has no gold labels")
        p = pred_by_id.get(d.id)
        predicted = set(p.labels) if p is not None else set()
        for l in predicted | d.gold_labels:
            if l not in known:
                raise LabelOutsideTaxonomy(d.id, l)
        for l in predicted & d.gold_labels:
            c.tp[l] += 1
        for l in predicted - d.gold_labels:
            c.fp[l] += 1
        for l in d.gold_labels - predicted:
            c.fn[l] += 1
    c.n_docs = len(gold)
    return c


def micro_scores(c: LabelConfusion) -> tuple[float, float, float]:
    return prf(sum(c.tp.values()), sum(c.fp.values()), sum(c.fn.values()))


def micro_f1(c: LabelConfusion) -> float:
    """F1 of the pooled counts over all labels."""
    return micro_scores(c)[2]


def macro_universe(c: LabelConfusion, taxonomy: LabelSpace | None = None, average: MacroUniverse = "support") -> list[str]:
    if average == "taxonomy":
        return label_ids(taxonomy) if taxonomy is not None else c.labels
    if average == "support":
        return [l for l in c.labels if c.support(l) > 0]
    raise ValueError(f"unknown macro averaging universe {average!r}")


def macro_scores(c: LabelConfusion, taxonomy: LabelSpace | None = None, average: MacroUniverse = "support") -> tuple[float, float, float]:
    labels = macro_universe(c, taxonomy, average)
    if not labels:
        return 0.0, 0.0, 0.0
    per = [prf(c.tp.get(l, 0), c.fp.get(l, 0), c.fn.get(l, 0)) for l in labels]
    n = len(per)
    # fsum: the mean must not depend on label iteration order
    return math.fsum(x[0] for x in per) / n, math.fsum(x[1] for x in per) / n, math.fsum(x[2] for x in per) / n


def macro_f1(c: LabelConfusion, taxonomy: LabelSpace | None = None, average: MacroUniverse = "support") -> float:
    """Unweighted mean of per-label F1 over the chosen label universe."""
    return macro_scores(c, taxonomy, average)[2]


@dataclass
class EvalReport:
    micro_p: float
    micro_r: float
    micro_f1: float
    macro_p: float
    macro_r: float
    macro_f1: float
    n_docs: int
    per_label: list[tuple[str, float, float, float, int]]
    macro_average: str = "support"

    def to_json(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "micro": {"precision": self.micro_p, "recall": self.micro_r, "f1": self.micro_f1},
            "macro": {"precision": self.macro_p, "recall": self.macro_r, "f1": self.macro_f1},
            "macro_average": self.macro_average,
            "per_label": [
                {"label": l, "precision": p, "recall": r, "f1": f, "support": s} for l, p, r, f, s in self.per_label
            ],
        }

    def table(self, name: str = "model") -> str:
        """Two-column Mi / Ma summary on the 0-100 scale."""
        return f"{'Model':<16} {'Mi':>6} {'Ma':>6}\n{name:<16} {100 * self.micro_f1:>6.2f} {100 * self.macro_f1:>6.2f}"


def evaluate(preds: Sequence[PredictionSet], gold: Sequence[DocumentRecord], taxonomy: LabelSpace, average: MacroUniverse = "support") -> EvalReport:
    c = confusion_counts(preds, gold, taxonomy)
    mp, mr, mf = micro_scores(c)
    ap, ar, af = macro_scores(c, taxonomy, average)
    per_label = [(l, *prf(c.tp[l], c.fp[l], c.fn[l]), c.support(l)) for l in c.labels]
    return EvalReport(mp, mr, mf, ap, ar, af, c.n_docs, per_label, average)
