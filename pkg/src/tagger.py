"""
Tagger module - gazetteer longest-match mention detection.

The gazetteer is built from training gold surfaces and the synonyms of concepts
annotated in training. Tagging takes no KB argument: it only ever knows the
training KB.
"""

import json
from pathlib import Path
from typing import Union

from .corpus import Corpus, Document, Span, tokenize
from .kb import KnowledgeBase
from .logger import logger
from .trie import name_tokens


class Gazetteer:
    """Surface dictionary: token tuple -> concept ids it came from."""

    def __init__(self, entries: dict = None):
        self.entries = {}
        self.max_len = 0
        for tokens, provenance in (entries or {}).items():
            self.add(tokens, provenance)

    def add(self, tokens: tuple, provenance) -> None:
        if not tokens:
            return
        self.entries.setdefault(tuple(tokens), set()).update(provenance)
        self.max_len = max(self.max_len, len(tokens))

    def __contains__(self, tokens) -> bool:
        return tuple(tokens) in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path: Union[str, Path]) -> None:
        records = [{"tokens": list(t), "concepts": sorted(c)} for t, c in sorted(self.entries.items())]
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"max_len": self.max_len, "entries": records}, f, ensure_ascii=False, sort_keys=True)
        logger.info(f"Gazetteer saved to {path} ({len(self)} entries)")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Gazetteer":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        gazetteer = cls({tuple(r["tokens"]): set(r["concepts"]) for r in data["entries"]})
        logger.info(f"Gazetteer loaded from {path} ({len(gazetteer)} entries)")
        return gazetteer


def build_gazetteer(train_corpus: Corpus, training_kb: KnowledgeBase) -> Gazetteer:
    """Gold mention surfaces plus synonyms of every concept annotated in train."""
    gazetteer = Gazetteer()
    annotated = set()
    for ann in train_corpus.annotations:
        doc = train_corpus.documents[ann.doc_id]
        gazetteer.add(name_tokens(doc.surface(ann.span)), {ann.concept})
        annotated.add(ann.concept)

    for concept_id in sorted(annotated):
        if concept_id not in training_kb:
            continue
        for synonym in training_kb.get(concept_id).synonyms:
            gazetteer.add(name_tokens(synonym), {concept_id})

    logger.info(f"Gazetteer built: {len(gazetteer)} entries from {len(annotated)} annotated concepts (max_len={gazetteer.max_len})")
    return gazetteer


def tag(gazetteer: Gazetteer, document: Document) -> list:
    """Leftmost-longest non-overlapping dictionary matches as character spans."""
    tokens = tokenize(document.text)
    words = [t.token for t in tokens]
    spans = []
    i = 0
    while i < len(tokens):
        matched = 0
        for length in range(min(gazetteer.max_len, len(tokens) - i), 0, -1):
            if tuple(words[i:i + length]) in gazetteer.entries:
                matched = length
                break
        if matched:
            spans.append(Span(tokens[i].span.start, tokens[i + matched - 1].span.end))
            i += matched
        else:
            i += 1
    return spans
