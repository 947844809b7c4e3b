"""
Embedding module - hashed character-trigram vectors and exact nearest-neighbor search.

Vectors are sparse maps bucket -> weight over EMBED_DIM buckets, L2-normalized.
A ConceptIndex stacks one row per (concept, synonym) into a CSR matrix so a
query is one sparse product followed by a per-concept max.
"""

import json
import math
import os
import shutil
from collections import Counter
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
import xxhash
from scipy import sparse

from .conf import BOUNDARY, CACHE_DIR, EMBED_DIM, HASH_NAME, HASH_SEED, INDEX_CACHE_VERSION, NGRAM_ORDER
from .errors import EmptyIndexError
from .kb import KbView
from .logger import logger


def char_ngrams(text: str, n: int = NGRAM_ORDER) -> list:
    """Character n-grams of the lowercased text padded with the boundary marker."""
    if not text:
        return []
    padded = BOUNDARY + text.lower() + BOUNDARY
    return [padded[i:i + n] for i in range(len(padded) - n + 1)]


@lru_cache(maxsize=1 << 20)
def bucket(gram: str) -> int:
    return xxhash.xxh64_intdigest(gram.encode("utf-8"), seed=HASH_SEED) % EMBED_DIM


def embed_text(text: str) -> dict:
    """Unit-norm hashed trigram vector; empty text gives the zero vector."""
    counts = Counter(bucket(g) for g in char_ngrams(text))
    if not counts:
        return {}
    norm = math.sqrt(sum(c * c for c in counts.values()))
    return {b: c / norm for b, c in sorted(counts.items())}


def cosine(u: dict, v: dict) -> float:
    """Dot product of two normalized vectors; zero vectors score 0."""
    if len(u) > len(v):
        u, v = v, u
    score = sum(w * v.get(b, 0.0) for b, w in u.items())
    return min(1.0, max(-1.0, score))


def embed_matrix(texts: Iterable[str]) -> sparse.csr_matrix:
    """Stack embeddings of several texts into an (n x EMBED_DIM) CSR matrix."""
    indptr = [0]
    indices = []
    data = []
    for text in texts:
        vec = embed_text(text)
        indices.extend(vec.keys())
        data.extend(vec.values())
        indptr.append(len(indices))
    return sparse.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, EMBED_DIM),
    )


def _view_digest(kb_view: KbView) -> str:
    h = xxhash.xxh64(seed=HASH_SEED)
    for concept in kb_view.iter_concepts():
        h.update(concept.id.encode("utf-8"))
        for synonym in concept.synonyms:
            h.update(b"\x00" + synonym.encode("utf-8"))
        h.update(b"\x01")
    return h.hexdigest()


class ConceptIndex:
    """Synonym-level vector index over the concepts of one KB view."""

    def __init__(self, view_name: str, entry_ids: list, entry_synonyms: list, matrix: sparse.csr_matrix):
        self.view_name = view_name
        self.entry_ids = list(entry_ids)
        self.entry_synonyms = list(entry_synonyms)
        self.matrix = matrix.tocsr()

        # entries are grouped by concept in ascending id order
        self.concept_ids = []
        offsets = []
        for pos, concept_id in enumerate(self.entry_ids):
            if not self.concept_ids or self.concept_ids[-1] != concept_id:
                self.concept_ids.append(concept_id)
                offsets.append(pos)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.position = {concept_id: i for i, concept_id in enumerate(self.concept_ids)}

    def __len__(self) -> int:
        return len(self.entry_ids)

    @classmethod
    def build(cls, kb_view: KbView) -> "ConceptIndex":
        """Embed every synonym of every member concept."""
        entry_ids = []
        entry_synonyms = []
        for concept in kb_view.iter_concepts():
            for synonym in concept.synonyms:
                entry_ids.append(concept.id)
                entry_synonyms.append(synonym)
        matrix = embed_matrix(entry_synonyms)
        logger.info(f"ConceptIndex built for '{kb_view.name}': {len(entry_ids)} entries, {len(set(entry_ids))} concepts")
        return cls(kb_view.name, entry_ids, entry_synonyms, matrix)

    # --- persistence ---

    @staticmethod
    def cache_key(kb_view: KbView) -> str:
        return f"{kb_view.name}-{HASH_NAME}-{NGRAM_ORDER}-{EMBED_DIM}-v{INDEX_CACHE_VERSION}-{_view_digest(kb_view)}"

    def persist(self, directory: str) -> None:
        """Write the index to a cache directory, replacing what was there."""
        if os.path.exists(directory):
            shutil.rmtree(directory)
        os.makedirs(directory)
        sparse.save_npz(os.path.join(directory, "matrix.npz"), self.matrix)
        meta = {
            "version": INDEX_CACHE_VERSION,
            "view": self.view_name,
            "hash": HASH_NAME,
            "ngram": NGRAM_ORDER,
            "dim": EMBED_DIM,
            "entries": [[i, s] for i, s in zip(self.entry_ids, self.entry_synonyms)],
        }
        with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as f:
            json.dump(meta, f, ensure_ascii=False)
        logger.info(f"ConceptIndex persisted to {directory}")

    @classmethod
    def load_existing(cls, directory: str) -> Optional["ConceptIndex"]:
        """Load a cached index; None if the cache is missing or from another version."""
        try:
            with open(os.path.join(directory, "meta.json"), "r", encoding="utf-8") as f:
                meta = json.load(f)
            if meta.get("version") != INDEX_CACHE_VERSION or meta.get("dim") != EMBED_DIM:
                return None
            matrix = sparse.load_npz(os.path.join(directory, "matrix.npz"))
        except (OSError, ValueError, KeyError) as e:
            logger.debug(f"No usable index cache at {directory}: {e}")
            return None
        entry_ids = [e[0] for e in meta["entries"]]
        entry_synonyms = [e[1] for e in meta["entries"]]
        logger.info(f"Loaded cached ConceptIndex from {directory}")
        return cls(meta["view"], entry_ids, entry_synonyms, matrix)

    # --- search ---

    def _check(self):
        if not self.entry_ids:
            raise EmptyIndexError(f"concept index for '{self.view_name}' is empty")

    def concept_scores(self, queries: sparse.csr_matrix, concept_ids: Optional[list] = None) -> np.ndarray:
        """Max cosine over synonyms, shape (n_queries, n_concepts), for all or selected concepts."""
        self._check()
        if concept_ids is None:
            entry_scores = (queries @ self.matrix.T).toarray()
            return np.maximum.reduceat(entry_scores, self.offsets, axis=1)

        rows = []
        offsets = []
        for concept_id in concept_ids:
            i = self.position[concept_id]
            start = self.offsets[i]
            stop = self.offsets[i + 1] if i + 1 < len(self.offsets) else len(self.entry_ids)
            offsets.append(len(rows))
            rows.extend(range(start, stop))
        entry_scores = (queries @ self.matrix[rows].T).toarray()
        return np.maximum.reduceat(entry_scores, np.asarray(offsets, dtype=np.int64), axis=1)

    def search(self, query: dict, k: int) -> list:
        """Top-k concepts by (score desc, id asc)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self._check()
        scores = self.concept_scores(_as_row(query))[0]
        order = np.argsort(-scores, kind="stable")[:k]
        return [(self.concept_ids[i], float(min(1.0, scores[i]))) for i in order]


def _as_row(vec: dict) -> sparse.csr_matrix:
    indices = np.fromiter(vec.keys(), dtype=np.int64, count=len(vec))
    data = np.fromiter(vec.values(), dtype=np.float64, count=len(vec))
    return sparse.csr_matrix((data, indices, np.asarray([0, len(vec)], dtype=np.int64)), shape=(1, EMBED_DIM))


def build_index(kb_view: KbView, cache_dir: Optional[str] = CACHE_DIR) -> ConceptIndex:
    """Index a KB view, reusing the on-disk cache when one is configured."""
    if not cache_dir:
        return ConceptIndex.build(kb_view)

    directory = str(Path(cache_dir) / ConceptIndex.cache_key(kb_view))
    index = ConceptIndex.load_existing(directory)
    if index is None:
        index = ConceptIndex.build(kb_view)
        index.persist(directory)
    return index


def nearest(index: ConceptIndex, query: dict, k: int) -> list:
    """Exact top-k concepts for a query vector."""
    return index.search(query, k)
