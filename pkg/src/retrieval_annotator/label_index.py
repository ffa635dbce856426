"""Exact cosine top-k search over label-description embeddings.

A :class:`SemanticIndex` is an immutable snapshot. ``add``/``remove`` return a
new snapshot that shares every untouched row object with the old one, so an
update costs one normalization (the new row) and no similarity work.
"""

from __future__ import annotations

import json
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .core import LabelEntry, ScoredLabel, Taxonomy, l2_normalize, op_counter, row_dots, validate_vector
from .errors import (
    CorruptHeader,
    DimensionMismatch,
    DuplicateLabel,
    EmptyIndex,
    EmptyTaxonomy,
    InvalidK,
    MissingEmbedding,
    UnknownLabel,
)


class IndexStats(NamedTuple):
    K: int
    dim: int
    version: int


def check_k(k: object) -> int:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidK(f"k must be a positive integer, got {k!r}")
    return int(k)


def rank_order(scores: np.ndarray, tie_rank: np.ndarray) -> np.ndarray:
    """Indices of ``scores`` sorted descending, ties by ascending ``tie_rank``."""
    return np.lexsort((tie_rank, -scores))


class SemanticIndex:
    """Snapshot of normalized label vectors keyed by label id."""

    def __init__(self, ids: Sequence[str], rows: Sequence[np.ndarray], dim: int, taxonomy_version: int = 0):
        self.ids: tuple[str, ...] = tuple(ids)
        self.rows: tuple[np.ndarray, ...] = tuple(rows)
        self.dim = int(dim)
        self.taxonomy_version = int(taxonomy_version)
        self._pos = {label: i for i, label in enumerate(self.ids)}
        if len(self._pos) != len(self.ids):
            dup = next(l for l in self.ids if self.ids.count(l) > 1)
            raise DuplicateLabel(dup)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, label_id: object) -> bool:
        return label_id in self._pos

    def row(self, label_id: str) -> np.ndarray:
        try:
            return self.rows[self._pos[label_id]]
        except KeyError:
            raise UnknownLabel(label_id) from None

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.vstack(self.rows) if self.rows else np.empty((0, self.dim))
        m.setflags(write=False)
        return m

    @cached_property
    def _tie_rank(self) -> np.ndarray:
        rank = np.empty(len(self.ids), dtype=np.int64)
        for r, i in enumerate(sorted(range(len(self.ids)), key=self.ids.__getitem__)):
            rank[i] = r
        return rank

    @property
    def stats(self) -> IndexStats:
        return IndexStats(len(self), self.dim, self.taxonomy_version)

    # -- mutation (copy-on-write) ------------------------------------------

    def add(self, entry: LabelEntry) -> SemanticIndex:
        if entry.id in self._pos:
            raise DuplicateLabel(entry.id)
        if entry.embedding is None:
            raise MissingEmbedding(entry.id)
        vec = validate_vector(entry.embedding)
        if vec.size != self.dim:
            raise DimensionMismatch(self.dim, vec.size)
        row = l2_normalize(vec)
        row.setflags(write=False)
        return SemanticIndex(self.ids + (entry.id,), self.rows + (row,), self.dim, self.taxonomy_version + 1)

    def remove(self, label_id: str) -> SemanticIndex:
        if label_id not in self._pos:
            raise UnknownLabel(label_id)
        i = self._pos[label_id]
        return SemanticIndex(
            self.ids[:i] + self.ids[i + 1 :],
            self.rows[:i] + self.rows[i + 1 :],
            self.dim,
            self.taxonomy_version + 1,
        )

    # -- search --------------------------------------------------------------

    def scores(self, query: np.ndarray) -> np.ndarray:
        """Cosine similarity of ``query`` against every row, in row order."""
        if not self.rows:
            raise EmptyIndex("cannot search an empty index")
        q = validate_vector(query, self.dim)
        q = q / np.sqrt(np.dot(q, q))
        op_counter.add("similarities", len(self.rows))
        return np.clip(row_dots(self.matrix, q), -1.0, 1.0)

    def ranking(self, query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Full ranking: (row positions, scores) sorted by the tie-break rule."""
        s = self.scores(query)
        order = rank_order(s, self._tie_rank)
        return order, s[order]

    def search(self, query: np.ndarray, k: int) -> list[ScoredLabel]:
        k = check_k(k)
        order, s = self.ranking(query)
        return [ScoredLabel(self.ids[i], float(v)) for i, v in zip(order[:k], s[:k])]

    def __repr__(self) -> str:
        return f"SemanticIndex(K={len(self)}, dim={self.dim}, version={self.taxonomy_version})"


# -- functional surface ------------------------------------------------------


def build_index(taxonomy: Taxonomy) -> SemanticIndex:
    """Normalize every label embedding of ``taxonomy`` into a new index.

    Raises:
        EmptyTaxonomy: the taxonomy has no labels.
        MissingEmbedding: some label has no embedding.
        DimensionMismatch: embeddings disagree on dimension.
    """
    entries = list(taxonomy)
    if not entries:
        raise EmptyTaxonomy("cannot index an empty taxonomy")
    dim = None
    rows = []
    for entry in entries:
        if entry.embedding is None:
            raise MissingEmbedding(entry.id)
        vec = validate_vector(entry.embedding, dim)
        dim = vec.size
        row = l2_normalize(vec)
        row.setflags(write=False)
        rows.append(row)
    return SemanticIndex([e.id for e in entries], rows, dim, taxonomy.version)


def empty_index(dim: int, taxonomy_version: int = 0) -> SemanticIndex:
    return SemanticIndex((), (), dim, taxonomy_version)


def add_label(index: SemanticIndex, entry: LabelEntry) -> SemanticIndex:
    return index.add(entry)


def remove_label(index: SemanticIndex, label_id: str) -> SemanticIndex:
    return index.remove(label_id)


def search_top_k(index: SemanticIndex, query: np.ndarray, k: int) -> list[ScoredLabel]:
    return index.search(query, k)


def index_stats(index: SemanticIndex) -> IndexStats:
    return index.stats


# -- persistence -------------------------------------------------------------

TAXONOMY_FILE = "taxonomy.jsonl"
VECTORS_FILE = "label_vectors.txve"
META_FILE = "index.json"


def save_index(index: SemanticIndex, taxonomy: Taxonomy, directory: str | Path) -> Path:
    """Write taxonomy manifest, row vectors and metadata under ``directory``.

    Rows are written as float32. Loading does not re-normalize, so a
    save-load-save cycle is byte-identical.
    """
    from .dataset_io import write_taxonomy
    from .gateway import write_vector_file

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    missing = [i for i in index.ids if i not in taxonomy]
    if missing:
        raise UnknownLabel(missing[0])
    write_taxonomy(directory / TAXONOMY_FILE, [taxonomy[i] for i in index.ids])
    write_vector_file(directory / VECTORS_FILE, list(zip(index.ids, index.rows)))
    meta = {"count": len(index), "dim": index.dim, "version": index.taxonomy_version}
    (directory / META_FILE).write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return directory


def load_index(directory: str | Path) -> tuple[SemanticIndex, Taxonomy]:
    from .dataset_io import load_taxonomy
    from .gateway import load_vector_file

    directory = Path(directory)
    try:
        meta = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
        dim, version, count = int(meta["dim"]), int(meta["version"]), int(meta["count"])
    except (OSError, ValueError, KeyError) as exc:
        raise CorruptHeader(f"unreadable index metadata in {directory}: {exc}") from exc
    records = load_vector_file(directory / VECTORS_FILE)
    taxonomy = load_taxonomy(directory / TAXONOMY_FILE, allow_empty=count == 0)
    if len(records) != count or [r[0] for r in records] != taxonomy.ids:
        raise CorruptHeader(f"index files in {directory} disagree on label rows")
    rows = []
    for label_id, vec in records:
        if vec.size != dim:
            raise DimensionMismatch(dim, vec.size)
        vec.setflags(write=False)
        rows.append(vec)
    taxonomy = Taxonomy(
        (taxonomy[i].with_embedding(v) for i, v in records), version=version, allow_empty=True
    )
    return SemanticIndex([r[0] for r in records], rows, dim, version), taxonomy
