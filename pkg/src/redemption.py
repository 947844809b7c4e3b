"""
Redemption module - post-pruning and thresholding of predictions made against a partial KB,
plus the dev-set threshold search and a KB-closure audit.
"""

import json
import math
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from pydantic import BaseModel, field_validator

from .errors import KbClosureError
from .evaluation import prf
from .kb import KbView
from .logger import logger


class Threshold(BaseModel):
    paradigm: str
    theta: float
    dev_f1: float
    tuned_on: str = "dev"

    @field_validator("theta")
    @classmethod
    def validate_theta(cls, v):
        # -inf is the "keep everything" threshold; +inf and NaN have no use
        if math.isnan(v) or v == math.inf:
            raise ValueError(f"theta must be finite or -inf, got {v}")
        return v


def post_prune(predictions: Iterable, partial: KbView) -> list:
    """Drop predictions whose concept is outside the partial view."""
    predictions = list(predictions)
    kept = [p for p in predictions if p.concept in partial]
    logger.info(f"Post-pruning to '{partial.name}': kept {len(kept)} of {len(predictions)} predictions")
    return kept


def apply_threshold(predictions: Iterable, theta: Optional[float]) -> list:
    """Keep predictions scoring at least theta; None means no threshold."""
    if theta is None:
        return list(predictions)
    return [p for p in predictions if p.score >= theta]


def _best_scores(predictions: Iterable) -> dict:
    """Distinct (doc, start, end, concept) -> highest score among its copies."""
    best = {}
    for p in predictions:
        key = (p.doc_id, p.span.start, p.span.end, p.concept)
        if key not in best or p.score > best[key]:
            best[key] = p.score
    return best


def threshold_curve(predictions: Iterable, gold: Iterable) -> list:
    """
    (theta, F1) for theta = -inf, each distinct score, and just above the max score.

    F1 only changes at observed scores, so this grid is exact.
    """
    best = _best_scores(predictions)
    gold_tuples = {(g.doc_id, g.span.start, g.span.end, g.concept) for g in gold}
    n_gold = len(gold_tuples)

    keys = list(best)
    scores = np.asarray([best[k] for k in keys], dtype=np.float64)
    correct = np.asarray([k in gold_tuples for k in keys], dtype=np.int64)
    curve = [(-math.inf, prf(int(correct.sum()), len(keys), n_gold).f1)]
    if not keys:
        return curve

    order = np.argsort(-scores, kind="stable")
    scores, correct = scores[order], correct[order]
    tp = np.cumsum(correct)
    distinct = np.unique(scores)
    # number of predictions with score >= s, for each distinct s
    kept = len(scores) - np.searchsorted(scores[::-1], distinct, side="left")
    for s, n in zip(distinct, kept):
        curve.append((float(s), prf(int(tp[n - 1]), int(n), n_gold).f1))
    curve.append((math.nextafter(float(scores[0]), math.inf), prf(0, 0, n_gold).f1))
    return curve


def tune_threshold(dev_predictions: Iterable, dev_gold: Iterable, paradigm: str = "", tuned_on: str = "dev") -> Threshold:
    """Theta maximizing dev EL F1; ties go to the largest theta."""
    curve = threshold_curve(dev_predictions, dev_gold)
    theta, f1 = max(curve, key=lambda c: (c[1], c[0]))
    logger.info(f"Tuned theta={theta} on {tuned_on} ({paradigm}): F1={f1:.4f} over {len(curve)} candidates")
    return Threshold(paradigm=paradigm, theta=theta, dev_f1=f1, tuned_on=tuned_on)


def save_threshold(threshold: Threshold, path: Union[str, Path]) -> None:
    # json writes -inf as -Infinity, which json.loads reads back
    with open(path, "w", encoding="utf-8") as f:
        json.dump(threshold.model_dump(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Threshold written to {path}")


def load_threshold(path: Union[str, Path]) -> Threshold:
    with open(path, "r", encoding="utf-8") as f:
        return Threshold.model_validate(json.load(f))


def audit_closure(predictions: Iterable, view: KbView) -> int:
    """Raise KbClosureError if any prediction names a concept outside the view; return the count checked."""
    predictions = list(predictions)
    outside = sorted({p.concept for p in predictions if p.concept not in view})
    if outside:
        raise KbClosureError(
            f"{len(outside)} predicted concepts outside view '{view.name}', e.g. {', '.join(outside[:5])}"
        )
    logger.debug(f"Closure audit passed for {len(predictions)} predictions in '{view.name}'")
    return len(predictions)
