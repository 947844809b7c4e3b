"""
Error types raised by the library. The CLI turns them into one-line messages.
"""


class PartialElError(Exception):
    """Base class for every error this package raises on purpose."""

    kind = "error"


class KbFormatError(PartialElError):
    kind = "kb_format"

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class DuplicateConceptError(PartialElError):
    kind = "duplicate_concept"

    def __init__(self, concept_id: str, line_no: int = 0):
        self.concept_id = concept_id
        where = f" (line {line_no})" if line_no else ""
        super().__init__(f"duplicate concept id '{concept_id}'{where}")


class EmptyKbError(PartialElError):
    kind = "empty_kb"


class EmptyPartialError(PartialElError):
    kind = "empty_partial"


class ParentMismatchError(PartialElError):
    kind = "parent_mismatch"


class CorpusFormatError(PartialElError):
    kind = "corpus_format"

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")


class DanglingDocumentError(PartialElError):
    kind = "dangling_doc"


class SpanOutOfRangeError(PartialElError):
    kind = "span_out_of_range"


class OverlappingGoldError(PartialElError):
    kind = "overlapping_gold"


class EmptyIndexError(PartialElError):
    kind = "empty_index"


class ViewMismatchError(PartialElError):
    kind = "view_mismatch"


class KbClosureError(PartialElError):
    kind = "kb_closure"


class ConfigError(PartialElError):
    kind = "config"


class ReportError(PartialElError):
    kind = "report"


class PredictionsFormatError(PartialElError):
    kind = "predictions_format"

    def __init__(self, path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {reason}")
