"""Synthetic corpora with known geometry, for tests and demos."""

from __future__ import annotations

import numpy as np

from .core import DocumentRecord, LabelEntry, Taxonomy


def _label_entries(vectors: np.ndarray, prefix: str = "L") -> list[LabelEntry]:
    width = len(str(len(vectors) - 1))
    return [
        LabelEntry(f"{prefix}{i:0{width}d}", f"label {i}", f"synthetic label number {i}", v)
        for i, v in enumerate(vectors)
    ]


def make_constructed_geometry(n_docs: int = 60, n_labels: int = 12, labels_per_doc: int = 3, noise: float = 0.05, seed: int = 0):
    """Taxonomy + documents whose gold labels are exactly their nearest labels.

    Label vectors are the standard basis of R^n_labels. Each document is the
    sum of its gold labels' basis vectors plus small noise, so its gold
    labels score about 1/sqrt(labels_per_doc) and every other label about 0.
    """
    if noise * 4 >= 1:
        raise ValueError("noise too large to keep gold labels nearest")
    rng = np.random.default_rng(seed)
    taxonomy = Taxonomy(_label_entries(np.eye(n_labels)))
    ids = taxonomy.ids
    docs = []
    for i in range(n_docs):
        gold = sorted(rng.choice(n_labels, size=labels_per_doc, replace=False))
        v = np.zeros(n_labels)
        v[gold] = 1.0
        v += rng.uniform(-noise, noise, size=n_labels)
        docs.append(DocumentRecord(f"d{i:05d}", f"document {i}", frozenset(ids[g] for g in gold), v))
    return taxonomy, docs


def make_clustered_corpus(
    n_docs: int = 5000,
    n_labels: int = 20,
    dim: int = 32,
    modes_per_label: int = 6,
    doc_noise: float = 0.15,
    description_noise: float = 0.6,
    seed: int = 0,
):
    """Taxonomy + labelled documents drawn from multi-modal label clusters.

    Every label owns ``modes_per_label`` random unit directions. A document
    with label set Y is the sum of one randomly chosen mode per label in Y,
    plus isotropic noise. A label's description embedding is the mean of its
    modes plus noise, so label-description similarity is informative but
    imperfect, while nearest-neighbour voting improves as more documents
    cover each mode.
    """
    rng = np.random.default_rng(seed)
    modes = rng.normal(size=(n_labels, modes_per_label, dim))
    modes /= np.linalg.norm(modes, axis=2, keepdims=True)
    desc = modes.mean(axis=1) + description_noise * rng.normal(size=(n_labels, dim)) / np.sqrt(dim)
    taxonomy = Taxonomy(_label_entries(desc))
    ids = taxonomy.ids
    popularity = 1.0 / np.arange(1, n_labels + 1) ** 0.5
    popularity /= popularity.sum()
    docs = []
    for i in range(n_docs):
        n_gold = rng.choice([1, 2, 3], p=[0.5, 0.3, 0.2])
        gold = rng.choice(n_labels, size=n_gold, replace=False, p=popularity)
        v = sum(modes[g, rng.integers(modes_per_label)] for g in gold)
        v = v + doc_noise * rng.normal(size=dim)
        docs.append(DocumentRecord(f"doc{i:06d}", f"synthetic document {i}", frozenset(ids[g] for g in gold), v))
    return taxonomy, docs
