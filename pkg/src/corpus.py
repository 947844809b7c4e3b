"""
Corpus module - documents, gold annotations, tokenization, gold restriction and statistics.
"""

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

import pandas as pd
from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import CorpusFormatError, DanglingDocumentError, SpanOutOfRangeError
from .kb import KbView
from .logger import logger

SPLITS = ("train", "dev", "test")
TOKEN_PATTERN = re.compile(r"[^\W_]+")


# --- Pydantic Schemas ---

class AnnotationRecord(BaseModel):
    """Schema for one gold annotation; composite mentions carry several ids."""
    start: int = Field(..., ge=0)
    end: int
    concept: Union[str, list[str]]

    @field_validator("concept")
    @classmethod
    def split_composite(cls, v):
        ids = v if isinstance(v, list) else v.split("|")
        ids = [i.strip() for i in ids if i.strip()]
        if not ids:
            raise ValueError("annotation has no concept id")
        return ids


class DocumentRecord(BaseModel):
    """Schema for one corpus JSONL line. A line without text only adds annotations."""
    doc_id: str = Field(..., min_length=1)
    text: Optional[str] = None
    annotations: list[AnnotationRecord] = Field(default_factory=list)

    @field_validator("text")
    @classmethod
    def validate_text(cls, v):
        if v is not None and not v:
            raise ValueError("document text must be non-empty")
        return v


# --- Domain Types ---

class Span(NamedTuple):
    start: int
    end: int


class TokenSpan(NamedTuple):
    token: str
    span: Span


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    def surface(self, span: Span) -> str:
        return self.text[span.start:span.end]


@dataclass(frozen=True, order=True)
class GoldAnnotation:
    doc_id: str
    span: Span
    concept: str


@dataclass(frozen=True)
class Corpus:
    split: str
    documents: dict
    annotations: tuple
    _by_doc: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(sorted(self.annotations)))
        by_doc = {doc_id: [] for doc_id in self.documents}
        for ann in self.annotations:
            if ann.doc_id not in by_doc:
                raise DanglingDocumentError(f"annotation references unknown document '{ann.doc_id}'")
            by_doc[ann.doc_id].append(ann)
        object.__setattr__(self, "_by_doc", {k: tuple(v) for k, v in by_doc.items()})

    def iter_documents(self):
        """Documents in ascending doc_id order."""
        for doc_id in sorted(self.documents):
            yield self.documents[doc_id]

    def gold_for(self, doc_id: str) -> tuple:
        return self._by_doc.get(doc_id, ())

    def replace_annotations(self, annotations) -> "Corpus":
        return Corpus(split=self.split, documents=self.documents, annotations=tuple(annotations))


# --- Tokenization ---

def tokenize(text: str) -> list:
    """Maximal alphanumeric runs, lowercased, with exact character spans."""
    return [TokenSpan(m.group().lower(), Span(m.start(), m.end())) for m in TOKEN_PATTERN.finditer(text)]


# --- Loading and writing ---

def load_corpus(path: Union[str, Path], split: Optional[str] = None, kb: Optional[KbView] = None) -> Corpus:
    """Load one corpus split from JSONL and validate every span."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")

    documents = {}
    pending = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = DocumentRecord.model_validate_json(line)
            except ValidationError as e:
                reason = e.errors()[0].get("msg", str(e))
                raise CorpusFormatError(path, line_no, reason) from e
            if record.text is not None:
                if record.doc_id in documents:
                    raise CorpusFormatError(path, line_no, f"duplicate doc_id '{record.doc_id}'")
                documents[record.doc_id] = Document(record.doc_id, record.text)
            for ann in record.annotations:
                pending.append((line_no, record.doc_id, ann))

    annotations = set()
    dropped = 0
    for line_no, doc_id, ann in pending:
        doc = documents.get(doc_id)
        if doc is None:
            raise DanglingDocumentError(f"{path}:{line_no}: annotation references unknown document '{doc_id}'")
        if not 0 <= ann.start < ann.end <= len(doc.text):
            raise SpanOutOfRangeError(
                f"{path}:{line_no}: span ({ann.start},{ann.end}) out of range for '{doc_id}' of length {len(doc.text)}"
            )
        for concept_id in ann.concept:
            if kb is not None and concept_id not in kb:
                dropped += 1
                continue
            annotations.add(GoldAnnotation(doc_id, Span(ann.start, ann.end), concept_id))

    if dropped:
        logger.warning(f"Dropped {dropped} annotations whose concept is not in KB '{kb.name}'")

    corpus = Corpus(split=split or path.stem, documents=documents, annotations=tuple(annotations))
    logger.info(f"Loaded corpus '{corpus.split}': {len(documents)} documents, {len(corpus.annotations)} annotations")
    return corpus


def write_corpus(corpus: Corpus, path: Union[str, Path]) -> None:
    """Write a corpus split as JSONL, one document per line."""
    with open(path, "w", encoding="utf-8") as f:
        for doc in corpus.iter_documents():
            record = {
                "doc_id": doc.doc_id,
                "text": doc.text,
                "annotations": [
                    {"start": a.span.start, "end": a.span.end, "concept": a.concept}
                    for a in corpus.gold_for(doc.doc_id)
                ],
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.info(f"Wrote corpus '{corpus.split}' ({len(corpus.annotations)} annotations) to {path}")


# --- Gold restriction ---

def restrict_gold(corpus: Corpus, kb_view: KbView) -> Corpus:
    """Keep annotations whose concept is in the view; every document is kept."""
    kept = [a for a in corpus.annotations if a.concept in kb_view.member_ids]
    logger.debug(f"Restricted '{corpus.split}' gold to '{kb_view.name}': {len(kept)}/{len(corpus.annotations)}")
    return corpus.replace_annotations(kept)


# --- Statistics ---

@dataclass(frozen=True)
class CorpusStats:
    split: str
    view: str
    n_concepts: int
    n_annotations: int
    n_annotated_concepts: int
    n_annotations_in_train: Optional[int]
    n_concepts_in_train: Optional[int]
    annotation_proportion: Optional[float]
    same_span_collisions: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def stats(corpus: Corpus, kb_view: KbView, train_corpus: Optional[Corpus] = None) -> CorpusStats:
    """Dataset statistics of one split against one KB view."""
    members = kb_view.member_ids
    in_view = [a for a in corpus.annotations if a.concept in members]
    annotated = {a.concept for a in in_view}

    # spans carrying both an in-view and an out-of-view concept
    span_kinds = {}
    for a in corpus.annotations:
        span_kinds.setdefault((a.doc_id, a.span), set()).add(a.concept in members)
    collisions = sum(1 for kinds in span_kinds.values() if len(kinds) == 2)
    if collisions:
        logger.warning(f"{collisions} spans in '{corpus.split}' carry both in-view and NIL gold for '{kb_view.name}'")

    n_in_train = n_concepts_in_train = proportion = None
    if train_corpus is not None:
        train_concepts = {a.concept for a in train_corpus.annotations}
        n_in_train = sum(1 for a in in_view if a.concept in train_concepts)
        n_concepts_in_train = len(annotated & train_concepts)
        total = len(train_corpus.annotations)
        train_in_view = sum(1 for a in train_corpus.annotations if a.concept in members)
        proportion = train_in_view / total if total else 0.0

    return CorpusStats(
        split=corpus.split,
        view=kb_view.name,
        n_concepts=len(members),
        n_annotations=len(in_view),
        n_annotated_concepts=len(annotated),
        n_annotations_in_train=n_in_train,
        n_concepts_in_train=n_concepts_in_train,
        annotation_proportion=proportion,
        same_span_collisions=collisions,
    )


def stats_table(splits: list, views: list, train_corpus: Optional[Corpus] = None) -> pd.DataFrame:
    """One row per (view, split) laid out like a dataset statistics table."""
    rows = [stats(corpus, view, train_corpus).as_dict() for view in views for corpus in splits]
    return pd.DataFrame(rows)
