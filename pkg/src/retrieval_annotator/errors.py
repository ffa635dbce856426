"""Exception hierarchy.

Every error belongs to one family; the family decides the CLI exit code.
"""

from __future__ import annotations


class AnnotatorError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


# --- vector / argument validation -------------------------------------------


class InputValidationError(AnnotatorError, ValueError):
    exit_code = 3


class DimensionMismatch(InputValidationError):
    def __init__(self, expected: int, received: int, what: str = "vector"):
        self.expected = expected
        self.received = received
        super().__init__(f"{what} dimension mismatch: expected {expected}, received {received}")


class ZeroVector(InputValidationError):
    pass


class NonFiniteEntry(InputValidationError):
    pass


class InvalidK(InputValidationError):
    pass


class NonPositiveParam(InputValidationError):
    pass


# --- taxonomy ----------------------------------------------------------------


class TaxonomyError(AnnotatorError, ValueError):
    exit_code = 4


class DuplicateLabel(TaxonomyError):
    def __init__(self, label_id: str):
        self.label_id = label_id
        super().__init__(f"duplicate label id {label_id!r}")


class UnknownLabel(TaxonomyError, KeyError):
    def __init__(self, label_id: str):
        self.label_id = label_id
        super().__init__(f"unknown label id {label_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class MissingEmbedding(TaxonomyError):
    def __init__(self, label_id: str):
        self.label_id = label_id
        super().__init__(f"label {label_id!r} has no embedding")


class EmptyDescription(TaxonomyError):
    pass


class EmptyTaxonomy(TaxonomyError):
    pass


class GoldOutsideTaxonomy(TaxonomyError):
    def __init__(self, doc_id: str, label_id: str):
        self.doc_id = doc_id
        self.label_id = label_id
        super().__init__(f"document {doc_id!r}: gold label {label_id!r} is not in the taxonomy")


class LabelOutsideTaxonomy(TaxonomyError):
    def __init__(self, doc_id: str, label_id: str):
        self.doc_id = doc_id
        self.label_id = label_id
        super().__init__(f"document {doc_id!r}: predicted label {label_id!r} is not in the taxonomy")


# --- data / corpus -----------------------------------------------------------


class DataError(AnnotatorError, ValueError):
    exit_code = 5


class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {reason}")


class DuplicateDocId(DataError):
    pass


class NoGoldLabels(DataError):
    pass


class EmptyIndex(DataError):
    pass


class EmptyCorpus(DataError):
    pass


class EmptyValidationSet(DataError):
    pass


class EmptyPredictions(DataError):
    pass


class MissingGold(DataError):
    pass


class UnknownDoc(DataError):
    pass


class SizeTooLarge(DataError):
    pass


# --- binary formats ----------------------------------------------------------


class FormatError(AnnotatorError, ValueError):
    exit_code = 6


class CorruptHeader(FormatError):
    pass


class CountMismatch(FormatError):
    pass


# --- embedding service -------------------------------------------------------


class EmbeddingServiceError(AnnotatorError):
    exit_code = 7


class MalformedResponse(EmbeddingServiceError):
    pass


class EmptyText(EmbeddingServiceError, ValueError):
    pass


class ServiceUnreachable(EmbeddingServiceError):
    exit_code = 8
