"""
Predictions module - the ScoredPrediction record shared by every paradigm and its JSONL file format.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from .corpus import Span
from .errors import PredictionsFormatError
from .logger import logger


@dataclass(frozen=True)
class ScoredPrediction:
    doc_id: str
    span: Span
    concept: str
    score: float
    paradigm: str = ""

    @property
    def sort_key(self) -> tuple:
        return (self.doc_id, self.span.start, self.span.end, self.concept)


class PredictionsHeader(BaseModel):
    """First line of every predictions file: which view (and training KB) produced the predictions."""
    view: str
    kb: Optional[str] = None
    paradigm: str
    split: str
    pruned_from: Optional[str] = None


class PredictionRecord(BaseModel):
    """Schema for one predictions line after the header."""
    doc_id: str = Field(..., min_length=1)
    start: int = Field(..., ge=0)
    end: int
    concept: str = Field(..., min_length=1)
    score: float

    @model_validator(mode="after")
    def validate_span(self):
        if self.end <= self.start:
            raise ValueError(f"empty span [{self.start}, {self.end})")
        return self


def sort_predictions(predictions: Iterable[ScoredPrediction]) -> list:
    return sorted(predictions, key=lambda p: p.sort_key)


def dedup_per_span(predictions: Iterable[ScoredPrediction]) -> list:
    """Keep the max-scoring prediction per (doc_id, span); ties go to the smaller concept id."""
    best = {}
    for p in predictions:
        key = (p.doc_id, p.span)
        current = best.get(key)
        if current is None or (-p.score, p.concept) < (-current.score, current.concept):
            best[key] = p
    return sort_predictions(best.values())


def write_predictions(path: Union[str, Path], predictions: Iterable[ScoredPrediction], header: PredictionsHeader) -> None:
    """Write the header line and one JSON line per prediction, sorted."""
    predictions = sort_predictions(predictions)
    with open(path, "w", encoding="utf-8") as f:
        f.write(header.model_dump_json() + "\n")
        for p in predictions:
            record = {"doc_id": p.doc_id, "start": p.span.start, "end": p.span.end, "concept": p.concept, "score": p.score}
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.info(f"Wrote {len(predictions)} predictions ({header.paradigm}, view '{header.view}') to {path}")


def _parse(path, line_no: int, line: str, model):
    try:
        return model.model_validate_json(line)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err.get("loc", ()))
        reason = f"{where}: {err.get('msg')}" if where else err.get("msg", str(e))
        raise PredictionsFormatError(path, line_no, reason) from e


def read_predictions(path: Union[str, Path]) -> tuple:
    """Return (header, predictions) from a predictions file."""
    with open(path, "r", encoding="utf-8") as f:
        header = _parse(path, 1, f.readline(), PredictionsHeader)
        predictions = []
        for line_no, line in enumerate(f, start=2):
            if not line.strip():
                continue
            r = _parse(path, line_no, line, PredictionRecord)
            predictions.append(ScoredPrediction(r.doc_id, Span(r.start, r.end), r.concept, r.score, header.paradigm))
    logger.info(f"Read {len(predictions)} predictions from {path}")
    return header, predictions
