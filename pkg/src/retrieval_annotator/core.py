"""Core value types and dense-vector arithmetic.

Embeddings are plain 1-D ``numpy`` arrays of dtype float64. They are stored
as float32 on disk (see :mod:`retrieval_annotator.gateway`) but every dot
product is accumulated in float64.
"""

from __future__ import annotations

import math
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateLabel,
    EmptyDescription,
    EmptyTaxonomy,
    LabelOutsideTaxonomy,
    NonFiniteEntry,
    UnknownLabel,
    ZeroVector,
)


class OpCounter:
    """Thread-safe tally of expensive vector operations.

    Used by tests to prove that incremental index updates never touch
    existing rows.
    """

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._counts: Counter[str] = Counter()

    def add(self, name: str, n: int = 1) -> None:
        with self._lock:
            self._counts[name] += n

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def __getitem__(self, name: str) -> int:
        with self._lock:
            return self._counts[name]


#: Global counters: ``normalizations`` and ``similarities`` (rows scored).
op_counter = OpCounter()


def as_vector(values: Iterable[float] | np.ndarray) -> np.ndarray:
    """Coerce ``values`` to a 1-D float64 array (no validation beyond shape)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(1, arr.ndim, what="array rank")
    return arr


def validate_vector(a: Iterable[float] | np.ndarray, expected_dim: int | None = None) -> np.ndarray:
    """Return ``a`` as a float64 vector, raising if it is unusable.

    Raises:
        DimensionMismatch: if ``expected_dim`` is given and differs, or ``a`` is empty.
        NonFiniteEntry: if any entry is NaN or infinite.
        ZeroVector: if the vector has zero norm.
    """
    v = as_vector(a)
    if v.size == 0:
        raise DimensionMismatch(expected_dim or 1, 0)
    if expected_dim is not None and v.size != expected_dim:
        raise DimensionMismatch(expected_dim, v.size)
    if not np.all(np.isfinite(v)):
        raise NonFiniteEntry("vector contains NaN or infinite entries")
    if not np.any(v):
        raise ZeroVector("vector has zero norm")
    return v


def _norm(v: np.ndarray) -> float:
    n = float(np.sqrt(np.dot(v, v)))
    if n == 0.0:
        raise ZeroVector("vector has zero norm")
    return n


def cosine_similarity(a: Iterable[float] | np.ndarray, b: Iterable[float] | np.ndarray) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1]."""
    va, vb = as_vector(a), as_vector(b)
    if va.size != vb.size:
        raise DimensionMismatch(va.size, vb.size)
    sim = float(np.dot(va, vb)) / (_norm(va) * _norm(vb))
    return min(1.0, max(-1.0, sim))


def l2_normalize(a: Iterable[float] | np.ndarray) -> np.ndarray:
    """Scale ``a`` to unit Euclidean length."""
    v = as_vector(a)
    n = _norm(v)
    op_counter.add("normalizations")
    return v / n


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise :func:`l2_normalize` for a 2-D array; rejects zero rows."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroVector(f"row {bad} has zero norm")
    op_counter.add("normalizations", m.shape[0])
    return m / norms[:, None]


def row_dots(m: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``m @ q`` computed so each row's result does not depend on its position.

    BLAS gemv blocks rows and can round identical rows differently, which
    would make exact ties depend on insertion order. einsum's plain loop
    evaluates every row with the same instruction sequence.
    """
    return np.einsum("ij,j->i", m, q)


# --- domain records -----------------------------------------------------------


@dataclass(frozen=True)
class LabelEntry:
    """One label of the taxonomy: id, display name, description text, embedding."""

    id: str
    name: str
    description: str
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("label id must be a non-empty string")
        if not self.description or not self.description.strip():
            raise EmptyDescription(f"label {self.id!r} has an empty description")
        if self.embedding is not None:
            object.__setattr__(self, "embedding", validate_vector(self.embedding))

    def with_embedding(self, embedding: np.ndarray) -> LabelEntry:
        return LabelEntry(self.id, self.name, self.description, embedding)

    def to_json(self) -> dict:
        return {"id": self.id, "name": self.name, "description": self.description}


class Taxonomy:
    """The closed label space: an ordered, versioned set of :class:`LabelEntry`.

    Every mutation bumps ``version``. A taxonomy must hold at least one label
    at construction unless ``allow_empty`` is set (service bootstrap).
    """

    def __init__(self, entries: Iterable[LabelEntry] = (), version: int = 0, *, allow_empty: bool = False):
        self._entries: dict[str, LabelEntry] = {}
        for entry in entries:
            if entry.id in self._entries:
                raise DuplicateLabel(entry.id)
            self._entries[entry.id] = entry
        if not self._entries and not allow_empty:
            raise EmptyTaxonomy("taxonomy must contain at least one label")
        self.version = version

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[LabelEntry]:
        return iter(self._entries.values())

    def __contains__(self, label_id: object) -> bool:
        return label_id in self._entries

    def __getitem__(self, label_id: str) -> LabelEntry:
        try:
            return self._entries[label_id]
        except KeyError:
            raise UnknownLabel(label_id) from None

    @property
    def ids(self) -> list[str]:
        return list(self._entries)

    def copy(self) -> Taxonomy:
        return Taxonomy(self._entries.values(), self.version, allow_empty=True)

    def add(self, entry: LabelEntry) -> None:
        if entry.id in self._entries:
            raise DuplicateLabel(entry.id)
        self._entries[entry.id] = entry
        self.version += 1

    def remove(self, label_id: str) -> LabelEntry:
        if label_id not in self._entries:
            raise UnknownLabel(label_id)
        self.version += 1
        return self._entries.pop(label_id)

    def update(self, entry: LabelEntry) -> None:
        if entry.id not in self._entries:
            raise UnknownLabel(entry.id)
        self._entries[entry.id] = entry
        self.version += 1

    def __repr__(self) -> str:
        return f"Taxonomy(K={len(self)}, version={self.version})"


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    text: str = ""
    gold_labels: frozenset[str] | None = None
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("document id must be a non-empty string")
        if self.gold_labels is not None and not isinstance(self.gold_labels, frozenset):
            object.__setattr__(self, "gold_labels", frozenset(self.gold_labels))

    def with_embedding(self, embedding: np.ndarray) -> DocumentRecord:
        return DocumentRecord(self.id, self.text, self.gold_labels, embedding)


@dataclass(frozen=True)
class ScoredLabel:
    label: str
    score: float


@dataclass(frozen=True)
class PredictionSet:
    """Ranked labels predicted for one document.

    Items are ordered by score descending, ties by ascending label id, and
    labels are pairwise distinct.
    """

    doc_id: str
    items: tuple[ScoredLabel, ...] = ()

    def __post_init__(self) -> None:
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        seen = set()
        for prev, cur in zip(items, items[1:]):
            if (-prev.score, prev.label) > (-cur.score, cur.label):
                raise ValueError(f"prediction for {self.doc_id!r} is not ranked")
        for it in items:
            if it.label in seen:
                raise ValueError(f"prediction for {self.doc_id!r} repeats label {it.label!r}")
            seen.add(it.label)

    @property
    def labels(self) -> list[str]:
        return [it.label for it in self.items]

    @property
    def scores(self) -> list[float]:
        return [it.score for it in self.items]

    def __len__(self) -> int:
        return len(self.items)

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "labels": self.labels, "scores": self.scores}

    @classmethod
    def from_json(cls, obj: dict) -> PredictionSet:
        labels = obj["labels"]
        scores = obj.get("scores")
        if not scores:
            # an unscored label set: order is not meaningful, so canonicalize it
            labels = sorted(labels)
            scores = [0.0] * len(labels)
        return cls(str(obj["doc_id"]), tuple(ScoredLabel(l, float(s)) for l, s in zip(labels, scores)))


def rank_scored(pairs: Iterable[tuple[str, float]]) -> list[ScoredLabel]:
    """Sort (label, score) pairs by score descending, then label ascending."""
    return [ScoredLabel(l, s) for l, s in sorted(pairs, key=lambda p: (-p[1], p[0]))]


def check_closed_world(pred: PredictionSet, allowed: Taxonomy | Sequence[str] | frozenset[str]) -> None:
    """Raise :class:`LabelOutsideTaxonomy` if ``pred`` names an unknown label."""
    for label in pred.labels:
        if label not in allowed:
            raise LabelOutsideTaxonomy(pred.doc_id, label)


def is_finite_number(x: object) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
