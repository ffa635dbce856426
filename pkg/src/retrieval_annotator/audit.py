"""Out-of-taxonomy label detection for prediction files.

A sample hallucinates if at least one of its predicted labels is not a
taxonomy id. Labels are compared by exact equality after NFC normalization
and whitespace trimming; nothing is fuzzily repaired. Close string matches
are listed as an advisory only.
"""

from __future__ import annotations

import difflib
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import PredictionSet, Taxonomy
from .dataset_io import iter_jsonl
from .errors import EmptyPredictions, MalformedLine


def canonical_label(label: str) -> str:
    return unicodedata.normalize("NFC", label).strip()


def format_rate(rate: float) -> str:
    """``0.009`` -> ``"0.9%"``; at most two decimals, trailing zeros dropped."""
    return f"{100 * rate:.2f}".rstrip("0").rstrip(".") + "%"


@dataclass(frozen=True)
class Offense:
    doc_id: str
    label: str
    nearest_valid: str | None = None


@dataclass
class AuditReport:
    n_samples: int
    n_hallucinating_samples: int
    offending: list[Offense] = field(default_factory=list)
    n_predicted_labels: int = 0

    @property
    def rate(self) -> float:
        return self.n_hallucinating_samples / self.n_samples if self.n_samples else 0.0

    @property
    def top_hallucinated(self) -> list[tuple[str, int]]:
        """Invalid labels by frequency, ties alphabetical."""
        counts = Counter(o.label for o in self.offending)
        return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))

    @property
    def per_label_rate(self) -> float:
        """Share of predicted label occurrences that are invalid (not a per-sample rate)."""
        return len(self.offending) / self.n_predicted_labels if self.n_predicted_labels else 0.0

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "n_hallucinating_samples": self.n_hallucinating_samples,
            "rate": self.rate,
            "rate_display": format_rate(self.rate),
            "top_hallucinated": [{"label": l, "count": c} for l, c in self.top_hallucinated],
            "offending": [
                {"doc_id": o.doc_id, "label": o.label, "nearest_valid_advisory": o.nearest_valid} for o in self.offending
            ],
            "per_label_rate_nonstandard": self.per_label_rate,
        }

    def table(self, name: str = "predictions", top: int = 2) -> str:
        labels = ", ".join(l for l, _ in self.top_hallucinated[:top]) or "-"
        head = f"{'Dataset':<14} {'Count':>6} {'Rate':>7}  Top Hallucinated Labels"
        row = f"{name:<14} {self.n_hallucinating_samples:>6} {format_rate(self.rate):>7}  {labels}"
        return head + "\n" + row


def validate_or_reject(pred: PredictionSet | Iterable[str], taxonomy: Taxonomy | Iterable[str]) -> list[str]:
    """Return the predicted labels that are not in ``taxonomy`` (empty if valid)."""
    labels = pred.labels if isinstance(pred, PredictionSet) else list(pred)
    ids = taxonomy.ids if isinstance(taxonomy, Taxonomy) else list(taxonomy)
    valid = {canonical_label(i) for i in ids}
    return [l for l in labels if canonical_label(l) not in valid]


def _nearest(label: str, candidates: Sequence[str]) -> str | None:
    hits = difflib.get_close_matches(label, candidates, n=1, cutoff=0.6)
    return hits[0] if hits else None


def audit_records(records: Iterable[tuple[str, Sequence[str]]], taxonomy: Taxonomy, *, near_miss: bool = True) -> AuditReport:
    """Audit ``(doc_id, labels)`` pairs against ``taxonomy``."""
    ids = taxonomy.ids
    valid = {canonical_label(i) for i in ids}
    n = bad_samples = n_labels = 0
    offending: list[Offense] = []
    for doc_id, labels in records:
        n += 1
        n_labels += len(labels)
        invalid = [l for l in labels if canonical_label(l) not in valid]
        if invalid:
            bad_samples += 1
            for l in invalid:
                l = canonical_label(l)
                offending.append(Offense(doc_id, l, _nearest(l, ids) if near_miss else None))
    if n == 0:
        raise EmptyPredictions("no predictions to audit")
    return AuditReport(n, bad_samples, offending, n_labels)


def read_prediction_labels(path: str | Path) -> Iterable[tuple[str, list[str]]]:
    for line_no, obj in iter_jsonl(path):
        labels = obj.get("labels")
        doc_id = obj.get("doc_id")
        if doc_id is None or not isinstance(labels, list) or not all(isinstance(l, str) for l in labels):
            raise MalformedLine(line_no, 'expected {"doc_id": ..., "labels": [string, ...]}')
        yield str(doc_id), labels


def audit_predictions(preds: str | Path | Sequence[PredictionSet], taxonomy: Taxonomy, *, near_miss: bool = True) -> AuditReport:
    """Audit a predictions.jsonl file (read-only) or in-memory predictions."""
    if isinstance(preds, (str, Path)):
        records = read_prediction_labels(preds)
    else:
        records = ((p.doc_id, p.labels) for p in preds)
    return audit_records(records, taxonomy, near_miss=near_miss)
