"""
Paradigms module - the three entity-linking paradigms over an inference KB view.

    ner_ned     tag mentions, then link each to its nearest concept
    ned_ner     retrieve top-K concepts for the document, then read a span per concept
    generative  constrained decoding of a marked-up target sequence (see generative.py)
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy.special import softmax
from tqdm import tqdm

from .conf import PARADIGM_DEFAULTS, SPAN_TEMPERATURE
from .corpus import Corpus, Document, Span, tokenize
from .embed import ConceptIndex, embed_matrix, embed_text
from .generative import BigramLm, link_generative
from .logger import logger
from .predictions import ScoredPrediction, dedup_per_span, sort_predictions
from .tagger import Gazetteer, tag
from .trie import NameTrie

PARADIGMS = ("ner_ned", "ned_ner", "generative")


# --- NER-NED ---

def link_ner_ned(doc: Document, gazetteer: Gazetteer, index: ConceptIndex) -> list:
    """Tag spans, then link each span to its top-1 concept; score is the max cosine."""
    spans = tag(gazetteer, doc)
    if not spans:
        return []
    scores = index.concept_scores(embed_matrix(doc.surface(s) for s in spans))
    best = np.argmax(scores, axis=1)
    preds = [
        ScoredPrediction(doc.doc_id, span, index.concept_ids[j], float(min(1.0, scores[row, j])), "ner_ned")
        for row, (span, j) in enumerate(zip(spans, best))
    ]
    return sort_predictions(preds)


# --- NED-NER ---

@dataclass(frozen=True)
class RetrieverReaderScores:
    concepts: list
    cosines: np.ndarray
    p_re: np.ndarray
    candidates: list
    p_span: np.ndarray


def retrieve(doc: Document, index: ConceptIndex, K: int = PARADIGM_DEFAULTS["K"]) -> list:
    """Top-K concepts for the whole document text."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    return index.search(embed_text(doc.text), K)


def candidate_spans(doc: Document, max_span_tokens: int) -> list:
    tokens = tokenize(doc.text)
    spans = []
    for i in range(len(tokens)):
        for length in range(1, min(max_span_tokens, len(tokens) - i) + 1):
            spans.append(Span(tokens[i].span.start, tokens[i + length - 1].span.end))
    return spans


def score_retriever_reader(doc: Document, index: ConceptIndex, K: int = PARADIGM_DEFAULTS["K"],
                           max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]) -> RetrieverReaderScores:
    """P_re over retrieved concepts and, per concept, P_span over candidate spans."""
    retrieved = retrieve(doc, index, K)
    concepts = [c for c, _ in retrieved]
    cosines = np.asarray([s for _, s in retrieved], dtype=np.float64)
    p_re = softmax(cosines)

    candidates = candidate_spans(doc, max_span_tokens)
    if not candidates:
        return RetrieverReaderScores(concepts, cosines, p_re, [], np.zeros((0, len(concepts))))
    affinity = index.concept_scores(embed_matrix(doc.surface(s) for s in candidates), concepts)
    p_span = softmax(affinity / SPAN_TEMPERATURE, axis=0)
    return RetrieverReaderScores(concepts, cosines, p_re, candidates, p_span)


def link_ned_ner(doc: Document, index: ConceptIndex, K: int = PARADIGM_DEFAULTS["K"],
                 max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"], theta: Optional[float] = None) -> list:
    """Best span per retrieved concept, scored P_re * P_span, kept when >= theta."""
    theta = -math.inf if theta is None else theta
    scores = score_retriever_reader(doc, index, K, max_span_tokens)
    if not scores.candidates:
        return []
    best = np.argmax(scores.p_span, axis=0)
    preds = []
    for k, concept_id in enumerate(scores.concepts):
        score = float(scores.p_re[k] * scores.p_span[best[k], k])
        if score >= theta:
            preds.append(ScoredPrediction(doc.doc_id, scores.candidates[best[k]], concept_id, score, "ned_ner"))
    return dedup_per_span(preds)


# --- Corpus-level fan-out ---

@dataclass
class Linker:
    """One paradigm bound to its trained components and inference view."""
    paradigm: str
    index: Optional[ConceptIndex] = None
    gazetteer: Optional[Gazetteer] = None
    lm: Optional[BigramLm] = None
    trie: Optional[NameTrie] = None
    K: int = PARADIGM_DEFAULTS["K"]
    beam: int = PARADIGM_DEFAULTS["beam"]
    max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]
    theta: Optional[float] = None

    def __call__(self, doc: Document) -> list:
        if self.paradigm == "ner_ned":
            return link_ner_ned(doc, self.gazetteer, self.index)
        if self.paradigm == "ned_ner":
            return link_ned_ner(doc, self.index, K=self.K, max_span_tokens=self.max_span_tokens, theta=self.theta)
        if self.paradigm == "generative":
            return link_generative(doc, self.lm, self.trie, beam=self.beam, theta=self.theta,
                                   max_span_tokens=self.max_span_tokens)
        raise ValueError(f"Unknown paradigm: {self.paradigm}")


_worker_fn: Optional[Callable] = None


def _init_worker(fn: Callable) -> None:
    global _worker_fn
    _worker_fn = fn


def _run_worker(doc: Document) -> list:
    return _worker_fn(doc)


def map_documents(fn: Callable, corpus: Corpus, jobs: int = 1, desc: str = "link", progress: bool = False) -> list:
    """Apply fn to every document in doc_id order, optionally across worker processes."""
    docs = list(corpus.iter_documents())
    if jobs <= 1 or len(docs) < 2:
        return [fn(d) for d in tqdm(docs, desc=desc, disable=not progress)]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(fn,)) as pool:
        chunksize = max(1, len(docs) // (jobs * 4))
        return list(tqdm(pool.map(_run_worker, docs, chunksize=chunksize), total=len(docs), desc=desc, disable=not progress))


def link_corpus(linker: Linker, corpus: Corpus, jobs: int = 1, progress: bool = False) -> list:
    """Link every document; output sorted by (doc_id, start, end, concept) whatever the job count."""
    results = map_documents(linker, corpus, jobs=jobs, desc=linker.paradigm, progress=progress)
    preds = sort_predictions(p for doc_preds in results for p in doc_preds)
    logger.info(f"Linked {len(corpus.documents)} documents with {linker.paradigm}: {len(preds)} predictions")
    return preds


def retrieve_corpus(index: ConceptIndex, corpus: Corpus, K: int, jobs: int = 1) -> dict:
    """doc_id -> ranked retrieved concept ids, for recall@K."""
    results = map_documents(partial(_retrieved_ids, index=index, K=K), corpus, jobs=jobs, desc="retrieve")
    return {doc.doc_id: ids for doc, ids in zip(corpus.iter_documents(), results)}


def _retrieved_ids(doc: Document, index: ConceptIndex, K: int) -> list:
    return [c for c, _ in retrieve(doc, index, K)]
