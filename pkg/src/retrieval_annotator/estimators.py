"""scikit-learn compatible estimators over the functional core.

``X`` is always a 2-D array of document embeddings; ``y`` is a sequence of
label-id collections (one per row). ``predict`` returns a binary indicator
matrix whose columns follow ``classes_``; ``predict_sets`` returns the
ranked :class:`~retrieval_annotator.core.PredictionSet` objects.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .annotator import AnnotatorConfig, TrainingCorpusIndex, predict
from .core import DocumentRecord, LabelEntry, PredictionSet, Taxonomy
from .errors import DimensionMismatch
from .label_index import build_index
from .metrics import confusion_counts, micro_f1
from .tuner import DEFAULT_K_GRID, TuningSpec, tune_k


def _check_X(X, dim: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if dim is not None and X.shape[1] != dim:
        raise DimensionMismatch(dim, X.shape[1])
    return X


def _doc_ids(n: int, prefix: str) -> list[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}{i:0{width}d}" for i in range(n)]


def _records(X: np.ndarray, y: Sequence[Iterable[str]] | None, prefix: str) -> list[DocumentRecord]:
    if y is not None and len(y) != len(X):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} label sets")
    ids = _doc_ids(len(X), prefix)
    return [
        DocumentRecord(i, gold_labels=None if y is None else frozenset(y[n]), embedding=X[n]) for n, i in enumerate(ids)
    ]


class _AnnotatorBase(BaseEstimator):
    def _target(self):
        raise NotImplementedError

    def _config(self) -> AnnotatorConfig:
        raise NotImplementedError

    def predict_sets(self, X) -> list[PredictionSet]:
        check_is_fitted(self)
        X = _check_X(X, self.n_features_in_)
        target, cfg = self._target(), self._config()
        return [predict(x, target, cfg, doc_id) for doc_id, x in zip(_doc_ids(len(X), "q"), X)]

    def predict(self, X) -> np.ndarray:
        sets = self.predict_sets(X)
        col = {c: j for j, c in enumerate(self.classes_)}
        out = np.zeros((len(sets), len(self.classes_)), dtype=np.int64)
        for i, p in enumerate(sets):
            for label in p.labels:
                out[i, col[label]] = 1
        return out

    def score(self, X, y) -> float:
        """Micro-F1 of the predictions against ``y``."""
        preds = self.predict_sets(X)
        gold = [DocumentRecord(p.doc_id, gold_labels=frozenset(labels)) for p, labels in zip(preds, y)]
        return micro_f1(confusion_counts(preds, gold, list(self.classes_)))


class LabelSimilarityAnnotator(_AnnotatorBase):
    """Rank labels by cosine similarity to their description embeddings.

    Parameters
    ----------
    label_embeddings : array of shape (n_labels, dim)
        Embedded label descriptions.
    label_ids : sequence of str, optional
        Ids for the rows of ``label_embeddings``; defaults to "0", "1", ...
    k : int, optional
        Fixed output size. When ``None``, ``fit`` tunes it on (X, y).
    k_grid, objective : tuning grid and "micro" / "macro" F1 objective.
    threshold : float, optional
        Keep only labels scoring at least this much (at most k of them).
    """

    def __init__(self, label_embeddings=None, label_ids=None, k=None, k_grid=DEFAULT_K_GRID, objective="micro", threshold=None):
        self.label_embeddings = label_embeddings
        self.label_ids = label_ids
        self.k = k
        self.k_grid = k_grid
        self.objective = objective
        self.threshold = threshold

    def fit(self, X=None, y=None):
        L = _check_X(self.label_embeddings)
        ids = list(self.label_ids) if self.label_ids is not None else [str(i) for i in range(len(L))]
        taxonomy = Taxonomy(LabelEntry(i, i, i, v) for i, v in zip(ids, L))
        self.index_ = build_index(taxonomy)
        self.classes_ = np.array(self.index_.ids, dtype=object)
        self.n_features_in_ = self.index_.dim
        if self.k is None:
            if X is None or y is None:
                raise ValueError("k is None: fit needs validation X and y to tune it")
            val = _records(_check_X(X, self.n_features_in_), y, "v")
            spec = TuningSpec(tuple(self.k_grid), self.objective, "label_similarity", threshold=self.threshold)
            self.tuning_report_ = tune_k(val, self.index_, spec)
            self.k_ = self.tuning_report_.best_k
        else:
            self.k_ = int(self.k)
        return self

    def _target(self):
        return self.index_

    def _config(self) -> AnnotatorConfig:
        return AnnotatorConfig("label_similarity", self.k_, threshold=self.threshold)

    def decision_function(self, X) -> np.ndarray:
        """Cosine similarity of each row of X to each label, columns per ``classes_``."""
        check_is_fitted(self)
        X = _check_X(X, self.n_features_in_)
        return np.vstack([self.index_.scores(x) for x in X])


class NeighborVoteAnnotator(_AnnotatorBase):
    """Similarity-weighted label vote of the nearest training documents.

    ``fit(X, y)`` memorizes the training embeddings. With ``k=None`` the
    output size is tuned on ``X_val``/``y_val``, which are then required.
    """

    def __init__(self, k=None, vote_neighbors=10, k_grid=DEFAULT_K_GRID, objective="micro", threshold=None, labels=None):
        self.k = k
        self.vote_neighbors = vote_neighbors
        self.k_grid = k_grid
        self.objective = objective
        self.threshold = threshold
        self.labels = labels

    def fit(self, X, y, X_val=None, y_val=None):
        X = _check_X(X)
        train = _records(X, y, "t")
        classes = list(self.labels) if self.labels is not None else sorted(set().union(*map(set, y)))
        self.corpus_ = TrainingCorpusIndex(train, classes)
        self.classes_ = np.array(classes, dtype=object)
        self.n_features_in_ = X.shape[1]
        if self.k is None:
            if X_val is None or y_val is None:
                raise ValueError("k is None: fit needs X_val and y_val to tune it")
            val = _records(_check_X(X_val, self.n_features_in_), y_val, "v")
            spec = TuningSpec(tuple(self.k_grid), self.objective, "neighbor_vote", self.vote_neighbors, self.threshold)
            self.tuning_report_ = tune_k(val, self.corpus_, spec)
            self.k_ = self.tuning_report_.best_k
        else:
            self.k_ = int(self.k)
        return self

    def _target(self):
        return self.corpus_

    def _config(self) -> AnnotatorConfig:
        return AnnotatorConfig("neighbor_vote", self.k_, self.vote_neighbors, self.threshold)
