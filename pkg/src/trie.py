"""
Trie module - token prefix trie over concept names, used to constrain generative decoding.
"""

from typing import Iterator, Optional

from .corpus import tokenize
from .kb import KbView
from .logger import logger


class TrieNode:
    __slots__ = ("children", "concepts", "_ordered")

    def __init__(self):
        self.children = {}
        self.concepts = set()
        self._ordered = None

    @property
    def is_terminal(self) -> bool:
        return bool(self.concepts)

    def ordered_children(self) -> list:
        """Child tokens in ascending order, cached until the next insert below this node."""
        if self._ordered is None:
            self._ordered = sorted(self.children)
        return self._ordered


class NameTrie:
    """Token trie whose terminal nodes carry the concepts owning that name."""

    def __init__(self, view_name: str, canonical_only: bool = False):
        self.view_name = view_name
        self.canonical_only = canonical_only
        self.root = TrieNode()

    def insert(self, tokens: tuple, concept_id: str) -> None:
        node = self.root
        for token in tokens:
            node._ordered = None
            node = node.children.setdefault(token, TrieNode())
        node.concepts.add(concept_id)

    def node(self, prefix) -> Optional[TrieNode]:
        node = self.root
        for token in prefix:
            node = node.children.get(token)
            if node is None:
                return None
        return node

    def accepts(self, tokens) -> bool:
        node = self.node(tokens)
        return node is not None and node.is_terminal

    def paths(self) -> Iterator[tuple]:
        """Every terminal token path with its concept set, depth-first in token order."""
        stack = [((), self.root)]
        while stack:
            prefix, node = stack.pop()
            if node.is_terminal:
                yield prefix, frozenset(node.concepts)
            for token in sorted(node.children, reverse=True):
                stack.append((prefix + (token,), node.children[token]))


def name_tokens(name: str) -> tuple:
    return tuple(t.token for t in tokenize(name))


def build_trie(kb_view: KbView, canonical_only: bool = False) -> NameTrie:
    """Insert the tokenized names of every member concept."""
    trie = NameTrie(kb_view.name, canonical_only=canonical_only)
    skipped = 0
    for concept in kb_view.iter_concepts():
        names = (concept.canonical_name,) if canonical_only else concept.synonyms
        for name in names:
            tokens = name_tokens(name)
            if not tokens:
                skipped += 1
                continue
            trie.insert(tokens, concept.id)
    if skipped:
        logger.warning(f"Skipped {skipped} names without alphanumeric tokens in '{kb_view.name}'")
    logger.info(f"NameTrie built for '{kb_view.name}' (canonical_only={canonical_only})")
    return trie


def allowed_continuations(trie: NameTrie, prefix) -> tuple:
    """(next tokens, is_terminal, terminal concepts) for the node reached by the prefix."""
    node = trie.node(prefix)
    if node is None:
        return frozenset(), False, frozenset()
    return frozenset(node.children), node.is_terminal, frozenset(node.concepts)
