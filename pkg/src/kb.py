"""
Knowledge base module - loads, validates, subsets and complements concept inventories.

A `KnowledgeBase` is the training KB (E1). A `PartialKb` is an inference view (E2)
that keeps only concept ids and points back at its parent.
"""

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from .errors import (
    DuplicateConceptError,
    EmptyKbError,
    EmptyPartialError,
    KbFormatError,
    ParentMismatchError,
)
from .logger import logger

COMPLEMENT_MARK = "∁"


# --- Pydantic Schemas ---

class ConceptRecord(BaseModel):
    """Schema for one KB JSONL line."""
    id: str = Field(..., min_length=1)
    name: str = Field(..., min_length=1)
    synonyms: list[str] = Field(default_factory=list)
    types: list[str] = Field(default_factory=list)

    @field_validator("synonyms")
    @classmethod
    def validate_synonyms(cls, v):
        if any(not s.strip() for s in v):
            raise ValueError("synonyms must be non-empty strings")
        return v

    @field_validator("name")
    @classmethod
    def validate_name(cls, v):
        if not v.strip():
            raise ValueError("name must not be blank")
        return v


# --- Domain Types ---

@dataclass(frozen=True)
class Concept:
    id: str
    canonical_name: str
    synonyms: tuple
    semantic_types: frozenset = frozenset()


def make_concept(concept_id: str, name: str, synonyms: Iterable[str] = (), types: Iterable[str] = ()) -> Concept:
    """Build a Concept with the canonical name first and synonyms deduplicated case-insensitively."""
    seen = set()
    kept = []
    for surface in [name, *synonyms]:
        key = surface.lower()
        if key in seen:
            continue
        seen.add(key)
        kept.append(surface)
    return Concept(id=concept_id, canonical_name=name, synonyms=tuple(kept), semantic_types=frozenset(types))


@dataclass(frozen=True)
class KnowledgeBase:
    """Training KB: a named, non-empty map of concept id to Concept."""
    name: str
    concepts: dict = field(hash=False)

    def __post_init__(self):
        if not self.concepts:
            raise EmptyKbError(f"knowledge base '{self.name}' has no concepts")
        object.__setattr__(self, "_ids", frozenset(self.concepts))

    @property
    def member_ids(self) -> frozenset:
        return self._ids

    @property
    def parent(self) -> str:
        return self.name

    @property
    def kb(self) -> "KnowledgeBase":
        return self

    @property
    def is_proper(self) -> bool:
        return False

    def __contains__(self, concept_id) -> bool:
        return concept_id in self.concepts

    def __len__(self) -> int:
        return len(self.concepts)

    def get(self, concept_id: str) -> Concept:
        return self.concepts[concept_id]

    def iter_concepts(self) -> Iterator[Concept]:
        """Member concepts in ascending id order."""
        for concept_id in sorted(self.concepts):
            yield self.concepts[concept_id]

    def synonym_lookup(self) -> dict:
        """Lowercased surface -> sorted list of concept ids carrying it."""
        lookup = {}
        for concept in self.iter_concepts():
            for surface in concept.synonyms:
                lookup.setdefault(surface.lower(), []).append(concept.id)
        return lookup


@dataclass(frozen=True)
class PartialKb:
    """Inference view over a training KB; stores ids only."""
    name: str
    parent: str
    member_ids: frozenset
    kb: KnowledgeBase = field(repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.member_ids:
            raise EmptyPartialError(f"partial KB '{self.name}' is empty")

    @property
    def is_proper(self) -> bool:
        return self.member_ids != self.kb.member_ids

    def __contains__(self, concept_id) -> bool:
        return concept_id in self.member_ids

    def __len__(self) -> int:
        return len(self.member_ids)

    def get(self, concept_id: str) -> Concept:
        return self.kb.concepts[concept_id]

    def iter_concepts(self) -> Iterator[Concept]:
        for concept_id in sorted(self.member_ids):
            yield self.kb.concepts[concept_id]


KbView = Union[KnowledgeBase, PartialKb]


@dataclass(frozen=True)
class Selector:
    """Chooses concepts of a KB: explicit ids, one semantic type, or entries of a selector file."""
    kind: str
    ids: tuple = ()
    semantic_type: Optional[str] = None
    entries: tuple = ()
    source: Optional[str] = None

    @classmethod
    def from_ids(cls, ids: Iterable[str]) -> "Selector":
        return cls(kind="ids", ids=tuple(ids))

    @classmethod
    def from_type(cls, code: str) -> "Selector":
        return cls(kind="type", semantic_type=code)

    @classmethod
    def from_entries(cls, entries: Iterable[str], source: Optional[str] = None) -> "Selector":
        return cls(kind="names", entries=tuple(entries), source=source)


# --- Loading and writing ---

def load_kb(path: Union[str, Path], name: Optional[str] = None) -> KnowledgeBase:
    """Load a KB from JSONL, one concept per line."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")

    concepts = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = ConceptRecord.model_validate_json(line)
            except ValidationError as e:
                reason = e.errors()[0].get("msg", str(e))
                raise KbFormatError(path, line_no, reason) from e
            if record.id in concepts:
                raise DuplicateConceptError(record.id, line_no)
            concepts[record.id] = make_concept(record.id, record.name, record.synonyms, record.types)

    kb_name = name or path.stem
    if not concepts:
        raise EmptyKbError(f"knowledge base file is empty: {path}")

    kb = KnowledgeBase(name=kb_name, concepts=concepts)
    logger.info(f"Loaded KB '{kb_name}' with {len(kb)} concepts from {path}")
    return kb


def write_kb(kb: KnowledgeBase, path: Union[str, Path]) -> None:
    """Write a KB as JSONL sorted by concept id."""
    with open(path, "w", encoding="utf-8") as f:
        for concept in kb.iter_concepts():
            record = {
                "id": concept.id,
                "name": concept.canonical_name,
                "synonyms": list(concept.synonyms),
                "types": sorted(concept.semantic_types),
            }
            f.write(json.dumps(record, ensure_ascii=False) + "\n")
    logger.info(f"Wrote KB '{kb.name}' ({len(kb)} concepts) to {path}")


def load_selector(path: Union[str, Path]) -> Selector:
    """Read a selector file: one id or one name per line, '#' starts a comment."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"File not found: {path}")

    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            entry = line.split("#", 1)[0].strip()
            if entry:
                entries.append(entry)
    return Selector.from_entries(entries, source=str(path))


def write_partial(partial: PartialKb, path: Union[str, Path]) -> None:
    """Write a partial KB as a selector file of ids."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# view: {partial.name}\n")
        f.write(f"# parent: {partial.parent}\n")
        for concept_id in sorted(partial.member_ids):
            f.write(concept_id + "\n")
    logger.info(f"Wrote partial KB '{partial.name}' ({len(partial)} ids) to {path}")


def load_partial(kb: KnowledgeBase, path: Union[str, Path]) -> PartialKb:
    """Load a partial KB file; '# view:' and '# parent:' header comments are honored when present."""
    name = parent = None
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("# view:"):
                name = line.split(":", 1)[1].strip()
            elif line.startswith("# parent:"):
                parent = line.split(":", 1)[1].strip()
    if parent is not None and parent != kb.name:
        raise ParentMismatchError(f"partial KB file {path} belongs to '{parent}', not '{kb.name}'")
    return subset(kb, load_selector(path), name=name or Path(path).stem)


# --- Views ---

def subset(kb: KnowledgeBase, selector: Selector, name: Optional[str] = None) -> PartialKb:
    """Select a partial KB; selector entries missing from the KB are dropped and counted."""
    dropped = 0
    if selector.kind == "ids":
        members = {i for i in selector.ids if i in kb}
        dropped = len(set(selector.ids) - members)
        default_name = "ids"
    elif selector.kind == "type":
        members = {c.id for c in kb.iter_concepts() if selector.semantic_type in c.semantic_types}
        default_name = selector.semantic_type
    elif selector.kind == "names":
        lookup = None
        members = set()
        for entry in selector.entries:
            if entry in kb:
                members.add(entry)
                continue
            if lookup is None:
                lookup = kb.synonym_lookup()
            matched = lookup.get(entry.lower())
            if matched:
                members.update(matched)
            else:
                dropped += 1
        default_name = Path(selector.source).stem if selector.source else "names"
    else:
        raise ValueError(f"Unknown selector kind: {selector.kind}")

    if dropped:
        logger.warning(f"Selector dropped {dropped} entries absent from KB '{kb.name}'")

    view_name = name or default_name
    if not members:
        raise EmptyPartialError(f"selector '{view_name}' matched no concept of KB '{kb.name}'")

    partial = PartialKb(name=view_name, parent=kb.name, member_ids=frozenset(members), kb=kb)
    if not partial.is_proper:
        logger.warning(f"Partial KB '{view_name}' equals its parent '{kb.name}' (not a proper subset)")
    logger.info(f"Built partial KB '{view_name}' with {len(partial)} of {len(kb)} concepts")
    return partial


def complement(kb: KnowledgeBase, partial: PartialKb) -> PartialKb:
    """Concepts of the training KB that are not in the partial view."""
    if partial.parent != kb.name:
        raise ParentMismatchError(f"partial KB '{partial.name}' belongs to '{partial.parent}', not '{kb.name}'")

    members = kb.member_ids - partial.member_ids
    if partial.name.endswith(COMPLEMENT_MARK):
        name = partial.name[: -len(COMPLEMENT_MARK)]
    else:
        name = partial.name + COMPLEMENT_MARK
    if not members:
        raise EmptyPartialError(f"complement of '{partial.name}' in '{kb.name}' is empty")

    logger.info(f"Built complement '{name}' with {len(members)} concepts")
    return PartialKb(name=name, parent=kb.name, member_ids=frozenset(members), kb=kb)


def resolve_view(kb: KnowledgeBase, partial: Optional[PartialKb]) -> KbView:
    """The inference view: the partial KB if given, else the training KB itself."""
    return partial if partial is not None else kb
