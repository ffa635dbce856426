"""JSONL ingestion of documents and taxonomies, corpus statistics, splits."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .core import DocumentRecord, LabelEntry, Taxonomy
from .errors import (
    DuplicateDocId,
    DuplicateLabel,
    EmptyDescription,
    GoldOutsideTaxonomy,
    MalformedLine,
    NoGoldLabels,
    SizeTooLarge,
)

logger = logging.getLogger(__name__)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_no, object)`` for each non-blank line of a JSONL file."""
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedLine(n, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedLine(n, "expected a JSON object")
            yield n, obj


def dump_jsonl(path: str | Path, objects: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objects:
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
    return path


def load_taxonomy(path: str | Path, *, allow_empty: bool = False) -> Taxonomy:
    """Load ``{"id", "name", "description"}`` lines into a :class:`Taxonomy`."""
    entries: dict[str, LabelEntry] = {}
    for n, obj in iter_jsonl(path):
        label_id = obj.get("id")
        if not isinstance(label_id, str) or not label_id:
            raise MalformedLine(n, 'missing string "id"')
        if label_id in entries:
            raise DuplicateLabel(label_id)
        description = obj.get("description")
        if not isinstance(description, str) or not description.strip():
            raise EmptyDescription(f"line {n}: label {label_id!r} has an empty description")
        entries[label_id] = LabelEntry(label_id, str(obj.get("name", label_id)), description)
    return Taxonomy(entries.values(), allow_empty=allow_empty)


def write_taxonomy(path: str | Path, entries: Iterable[LabelEntry]) -> Path:
    return dump_jsonl(path, (e.to_json() for e in entries))


def load_documents(path: str | Path, taxonomy: Taxonomy | None = None, *, strict: bool = True) -> list[DocumentRecord]:
    """Load ``{"id", "text", "labels"?}`` lines.

    Gold labels are checked against ``taxonomy``. In lenient mode
    (``strict=False``) offending labels are logged and dropped instead.
    """
    docs: list[DocumentRecord] = []
    seen: set[str] = set()
    for n, obj in iter_jsonl(path):
        doc_id = obj.get("id")
        if not isinstance(doc_id, str) or not doc_id:
            raise MalformedLine(n, 'missing string "id"')
        if doc_id in seen:
            raise DuplicateDocId(f"line {n}: duplicate document id {doc_id!r}")
        seen.add(doc_id)
        text = obj.get("text", "")
        if not isinstance(text, str):
            raise MalformedLine(n, '"text" must be a string')
        labels = obj.get("labels")
        gold = None
        if labels is not None:
            if not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
                raise MalformedLine(n, '"labels" must be a list of strings')
            gold = set(labels)
            if taxonomy is not None:
                bad = sorted(l for l in gold if l not in taxonomy)
                if bad and strict:
                    raise GoldOutsideTaxonomy(doc_id, bad[0])
                for l in bad:
                    logger.warning("document %r: dropping gold label %r outside taxonomy", doc_id, l)
                gold -= set(bad)
        docs.append(DocumentRecord(doc_id, text, frozenset(gold) if gold is not None else None))
    return docs


def write_documents(path: str | Path, docs: Iterable[DocumentRecord]) -> Path:
    def record(d: DocumentRecord) -> dict:
        obj = {"id": d.id, "text": d.text}
        if d.gold_labels is not None:
            obj["labels"] = sorted(d.gold_labels)
        return obj

    return dump_jsonl(path, (record(d) for d in docs))


@dataclass
class CorpusStats:
    n_docs: int
    cardinality: int
    total_labels: int
    support: dict[str, int] = field(default_factory=dict)

    @property
    def avg_labels_per_doc(self) -> float:
        return float(Fraction(self.total_labels, self.n_docs))

    def to_json(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "cardinality": self.cardinality,
            "avg_labels_per_doc": round(self.avg_labels_per_doc, 2),
            "support": self.support,
        }

    def table(self, name: str = "corpus") -> str:
        head = f"{'Dataset':<12} {'N':>8} {'|L|':>6} {'L-bar':>7}"
        row = f"{name:<12} {self.n_docs:>8,} {self.cardinality:>6} {self.avg_labels_per_doc:>7.2f}"
        return head + "\n" + row


def corpus_stats(docs: Sequence[DocumentRecord], taxonomy: Taxonomy) -> CorpusStats:
    """Document count, label cardinality, mean labels per document, support."""
    if not docs:
        raise NoGoldLabels("corpus is empty")
    support = Counter({label: 0 for label in taxonomy.ids})
    total = 0
    for d in docs:
        if d.gold_labels is None:
            raise NoGoldLabels(f"document {d.id!r} has no gold labels")
        total += len(d.gold_labels)
        support.update(d.gold_labels)
    return CorpusStats(len(docs), len(taxonomy), total, dict(support))


@dataclass(frozen=True)
class SplitSpec:
    """Seeded split of a corpus into train / validation / test.

    Whatever is not train or validation is test.
    """

    seed: int = 0
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    subsample_sizes: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for f in (self.train_fraction, self.val_fraction):
            if not 0.0 < f < 1.0:
                raise ValueError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.val_fraction > 1.0:
            raise ValueError("train_fraction + val_fraction must not exceed 1")


def split_corpus(docs: Sequence[DocumentRecord], spec: SplitSpec) -> tuple[list, list, list]:
    n = len(docs)
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(round(n * spec.train_fraction))
    n_val = int(round(n * spec.val_fraction))
    shuffled = [docs[i] for i in perm]
    return shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]


def subsample_train(docs: Sequence[DocumentRecord], spec: SplitSpec, size: int) -> list[DocumentRecord]:
    """Uniform sample without replacement: a seeded shuffle, then a prefix.

    Samples drawn with the same seed are nested: smaller sizes are
    prefixes (hence subsets) of larger ones.
    """
    if size > len(docs):
        raise SizeTooLarge(f"requested {size} documents from a pool of {len(docs)}")
    if size < 0:
        raise ValueError("size must be non-negative")
    perm = np.random.default_rng(spec.seed).permutation(len(docs))
    return [docs[i] for i in perm[:size]]
