"""
Generative module - simultaneous mention detection and linking by constrained decoding.

A document is rewritten as a target sequence in which every mention is wrapped as
    [MB] x_i .. x_j [ME] [EB] concept name tokens [EE]
A smoothed bigram LM trained on gold target sequences scores tokens, and a beam
search restricted by the name trie of the inference view decodes new documents.

Context rule: every token is conditioned on its predecessor, except the first
concept-name token, which is conditioned on the last mention token so the name
depends on what was mentioned.
"""

import json
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Union

from .conf import (
    ENTITY_BEGIN,
    ENTITY_END,
    LM_SMOOTHING_K,
    MARKERS,
    MENTION_BEGIN,
    MENTION_END,
    PARADIGM_DEFAULTS,
    START_TOKEN,
    UNK_TOKEN,
)
from .corpus import Corpus, Document, Span, tokenize
from .errors import OverlappingGoldError
from .kb import KbView
from .logger import logger
from .predictions import ScoredPrediction, dedup_per_span
from .trie import NameTrie, name_tokens

PARADIGM = "generative"

OUT, MENTION, AFTER_ME, ENTITY = range(4)


# --- Target sequences ---

@dataclass(frozen=True)
class TargetSequence:
    tokens: tuple
    snapped: int = 0
    skipped: int = 0


def build_target_sequence(doc: Document, gold, kb: KbView) -> TargetSequence:
    """Source tokens with each gold mention wrapped in mention and concept markup."""
    tokens = tokenize(doc.text)
    snapped = skipped = 0

    # token range -> concept, one concept per span (smallest id)
    marks = {}
    for ann in sorted(gold, key=lambda a: (a.span, a.concept)):
        inside = [i for i, t in enumerate(tokens) if t.span.end > ann.span.start and t.span.start < ann.span.end]
        if not inside or ann.concept not in kb:
            skipped += 1
            continue
        first, last = inside[0], inside[-1]
        if tokens[first].span.start != ann.span.start or tokens[last].span.end != ann.span.end:
            snapped += 1
        marks.setdefault((first, last), ann.concept)

    ordered = sorted(marks)
    for (s1, e1), (s2, e2) in zip(ordered, ordered[1:]):
        if s2 <= e1:
            raise OverlappingGoldError(f"overlapping gold mentions in '{doc.doc_id}' at tokens {s1}-{e1} and {s2}-{e2}")

    if snapped:
        logger.warning(f"Snapped {snapped} gold spans to token boundaries in '{doc.doc_id}'")

    out = []
    i = 0
    for first, last in ordered:
        out.extend(t.token for t in tokens[i:first])
        out.append(MENTION_BEGIN)
        out.extend(t.token for t in tokens[first:last + 1])
        out.extend([MENTION_END, ENTITY_BEGIN])
        out.extend(name_tokens(kb.get(marks[(first, last)]).canonical_name))
        out.append(ENTITY_END)
        i = last + 1
    out.extend(t.token for t in tokens[i:])
    return TargetSequence(tuple(out), snapped=snapped, skipped=skipped)


def contexts(tokens) -> list:
    """Conditioning token for each position of a target sequence."""
    result = []
    prev = START_TOKEN
    last_mention = None
    in_mention = False
    for token in tokens:
        if prev == ENTITY_BEGIN and last_mention is not None:
            result.append(last_mention)
        else:
            result.append(prev)
        if token == MENTION_BEGIN:
            in_mention = True
        elif token == MENTION_END:
            in_mention = False
        elif in_mention:
            last_mention = token
        prev = token
    return result


# --- Bigram language model ---

class BigramLm:
    """Add-k smoothed bigram model over tokens, markers and UNK."""

    def __init__(self, vocab, bigram_counts: Counter, k: float = LM_SMOOTHING_K):
        self.vocab = frozenset(vocab) | set(MARKERS) | {UNK_TOKEN}
        self.k = k
        self.bigram_counts = Counter(bigram_counts)
        self.context_counts = Counter()
        self.successors = {}
        for (ctx, x), n in self.bigram_counts.items():
            self.context_counts[ctx] += n
            self.successors.setdefault(ctx, {})[x] = n
        self.vocab_size = len(self.vocab)

    def word(self, token: str) -> str:
        return token if token in self.vocab else UNK_TOKEN

    def context(self, token: str) -> str:
        return token if token == START_TOKEN or token in self.vocab else UNK_TOKEN

    def prob(self, token: str, context: str) -> float:
        c = self.context(context)
        x = self.word(token)
        return (self.bigram_counts.get((c, x), 0) + self.k) / (self.context_counts.get(c, 0) + self.k * self.vocab_size)

    def log_prob(self, token: str, context: str) -> float:
        return math.log(self.prob(token, context))

    def unseen_log_prob(self, context: str) -> float:
        c = self.context(context)
        return math.log(self.k / (self.context_counts.get(c, 0) + self.k * self.vocab_size))

    def token_log_probs(self, tokens) -> list:
        return [self.log_prob(x, c) for x, c in zip(tokens, contexts(tokens))]

    def save(self, path: Union[str, Path]) -> None:
        data = {
            "k": self.k,
            "vocab": sorted(self.vocab),
            "bigrams": [[c, x, n] for (c, x), n in sorted(self.bigram_counts.items())],
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False)
        logger.info(f"BigramLm saved to {path} (|V|={self.vocab_size})")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BigramLm":
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        lm = cls(data["vocab"], Counter({(c, x): n for c, x, n in data["bigrams"]}), k=data["k"])
        logger.info(f"BigramLm loaded from {path} (|V|={lm.vocab_size})")
        return lm


def train_lm(train_corpus: Corpus, training_kb: KbView, k: float = LM_SMOOTHING_K) -> BigramLm:
    """Count bigrams over the target sequences of every training document."""
    counts = Counter()
    vocab = set()
    snapped = 0
    for doc in train_corpus.iter_documents():
        target = build_target_sequence(doc, train_corpus.gold_for(doc.doc_id), training_kb)
        snapped += target.snapped
        vocab.update(target.tokens)
        counts.update(zip(contexts(target.tokens), target.tokens))
    lm = BigramLm(vocab, counts, k=k)
    logger.info(f"BigramLm trained on {len(train_corpus.documents)} documents: |V|={lm.vocab_size}, {sum(counts.values())} bigrams, {snapped} snapped spans")
    return lm



# --- Constrained decoding ---
#
# The search is synchronous on source positions: every hypothesis in a bucket has
# consumed the same source tokens, and the bucket keeps the `beam` best of them.
# Hypotheses are ranked by the log-likelihood of their text side (source tokens and
# mention markers) and then by the full sequence log-likelihood. Entity blocks
# ([EB] name [EE]) are forced by the trie once a mention is closed, so their cost
# picks the concept but never decides whether a mention is there.

@dataclass(frozen=True)
class Segment:
    first: int
    last: int
    concept: str
    score: float


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple
    logp: float
    pos: int
    phase: int
    text_logp: float = 0.0
    mention_len: int = 0
    mention_start: int = 0
    node: object = None
    last_mention: Optional[str] = None
    seg_logp: float = 0.0
    seg_len: int = 0
    segments: tuple = ()

    @property
    def rank_key(self) -> tuple:
        return (-self.text_logp, -self.logp, self.tokens)


def _context_for_next(hyp: Hypothesis) -> str:
    if hyp.tokens and hyp.tokens[-1] == ENTITY_BEGIN and hyp.last_mention is not None:
        return hyp.last_mention
    return hyp.tokens[-1] if hyp.tokens else START_TOKEN


def _step(hyp: Hypothesis, token: str, lp: float, text: bool = False, **changes) -> Hypothesis:
    in_segment = hyp.phase != OUT or token == MENTION_BEGIN
    fields = dict(
        tokens=hyp.tokens + (token,),
        logp=hyp.logp + lp,
        pos=hyp.pos,
        phase=hyp.phase,
        text_logp=hyp.text_logp + lp if text else hyp.text_logp,
        mention_len=hyp.mention_len,
        mention_start=hyp.mention_start,
        node=hyp.node,
        last_mention=hyp.last_mention,
        seg_logp=hyp.seg_logp + lp if in_segment else 0.0,
        seg_len=hyp.seg_len + 1 if in_segment else 0,
        segments=hyp.segments,
    )
    fields.update(changes)
    return Hypothesis(**fields)


def _entity_candidates(hyp: Hypothesis, lm: BigramLm, limit: int) -> list:
    """Best `limit` trie continuations of an entity block, plus EE on terminal nodes."""
    ctx = _context_for_next(hyp)
    node = hyp.node
    out = []
    if node.is_terminal:
        out.append((ENTITY_END, lm.log_prob(ENTITY_END, ctx)))
    children = node.children
    if not children:
        return out

    seen = lm.successors.get(lm.context(ctx), {})
    # out-of-vocabulary children score as UNK, so the short path only holds when UNK was never seen here
    if len(seen) < len(children) and UNK_TOKEN not in seen:
        scored = [(t, lm.log_prob(t, ctx)) for t in seen if t in children]
    else:
        scored = [(t, lm.log_prob(t, ctx)) for t in children if lm.word(t) in seen]
    seen_tokens = {t for t, _ in scored}
    scored.sort(key=lambda item: (-item[1], item[0]))
    scored = scored[:limit]

    # unseen continuations share one probability; take the smallest tokens
    unseen_lp = lm.unseen_log_prob(ctx)
    extra = []
    for token in node.ordered_children():
        if len(extra) >= limit:
            break
        if token not in seen_tokens:
            extra.append((token, unseen_lp))
    merged = sorted(scored + extra, key=lambda item: (-item[1], item[0]))[:limit]
    return out + merged


def _open(hyp: Hypothesis, lm: BigramLm) -> Hypothesis:
    lp = lm.log_prob(MENTION_BEGIN, _context_for_next(hyp))
    return _step(hyp, MENTION_BEGIN, lp, text=True, phase=MENTION, mention_len=0, mention_start=hyp.pos)


def _advance(hyp: Hypothesis, source: list, lm: BigramLm, max_span_tokens: int) -> list:
    """Children that consume the next source token, as plain text or inside the open mention."""
    token = source[hyp.pos]
    lp = lm.log_prob(token, _context_for_next(hyp))
    if hyp.phase == OUT:
        return [_step(hyp, token, lp, text=True, pos=hyp.pos + 1)]
    if hyp.mention_len < max_span_tokens:
        return [_step(hyp, token, lp, text=True, pos=hyp.pos + 1, mention_len=hyp.mention_len + 1, last_mention=token)]
    return []


def _end_entity(hyp: Hypothesis, lp: float) -> Hypothesis:
    seg_logp = hyp.seg_logp + lp
    seg_len = hyp.seg_len + 1
    segment = Segment(hyp.mention_start, hyp.pos - 1, min(hyp.node.concepts), seg_logp / seg_len)
    return _step(hyp, ENTITY_END, lp, phase=OUT, node=None, seg_logp=0.0, seg_len=0,
                 segments=hyp.segments + (segment,))


def _close(hyp: Hypothesis, lm: BigramLm, trie: NameTrie, beam: int) -> Optional[Hypothesis]:
    """Best `ME EB name EE` completion of an open mention; None when the trie has no name."""
    hyp = _step(hyp, MENTION_END, lm.log_prob(MENTION_END, _context_for_next(hyp)), text=True, phase=AFTER_ME)
    hyp = _step(hyp, ENTITY_BEGIN, lm.log_prob(ENTITY_BEGIN, _context_for_next(hyp)), phase=ENTITY, node=trie.root)

    live = [hyp]
    done = []
    while live:
        pool = []
        for cur in live:
            for token, lp in _entity_candidates(cur, lm, beam):
                if token == ENTITY_END:
                    pool.append(_end_entity(cur, lp))
                else:
                    pool.append(_step(cur, token, lp, node=cur.node.children[token]))
        pool.sort(key=lambda h: h.rank_key)
        pool = pool[:beam]
        done.extend(h for h in pool if h.phase == OUT)
        live = [h for h in pool if h.phase == ENTITY]
    return min(done, key=lambda h: h.rank_key) if done else None


def _settle(bucket: list, lm: BigramLm, trie: NameTrie, beam: int, at_end: bool) -> list:
    """Moves that consume nothing: closing an open mention and opening a new one."""
    out = []
    for hyp in bucket:
        ready = [hyp]
        if hyp.phase == MENTION and hyp.mention_len >= 1:
            closed = _close(hyp, lm, trie, beam)
            if closed is not None:
                ready.append(closed)
        for h in ready:
            out.append(h)
            if h.phase == OUT and not at_end and trie.root.children:
                out.append(_open(h, lm))
    return out


def decode(doc: Document, lm: BigramLm, trie: NameTrie, beam: int = PARADIGM_DEFAULTS["beam"],
           max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]) -> Hypothesis:
    """Best full hypothesis of the trie-constrained beam search."""
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    source = [t.token for t in tokenize(doc.text)]
    bucket = [Hypothesis(tokens=(), logp=0.0, pos=0, phase=OUT)]
    if not source:
        return bucket[0]

    for pos in range(len(source)):
        frontier = _settle(bucket, lm, trie, beam, at_end=False)
        candidates = [child for hyp in frontier for child in _advance(hyp, source, lm, max_span_tokens)]
        candidates.sort(key=lambda h: h.rank_key)
        bucket = candidates[:beam]

    # mentions only open on a non-empty trie, where every open mention can be closed
    finished = [h for h in _settle(bucket, lm, trie, beam, at_end=True) if h.phase == OUT]
    return min(finished, key=lambda h: h.rank_key)


def segments_to_predictions(doc: Document, hyp: Hypothesis, theta: float = -math.inf) -> list:
    tokens = tokenize(doc.text)
    preds = [
        ScoredPrediction(doc.doc_id, Span(tokens[s.first].span.start, tokens[s.last].span.end), s.concept, s.score, PARADIGM)
        for s in hyp.segments
        if s.score >= theta
    ]
    return dedup_per_span(preds)


def link_generative(doc: Document, lm: BigramLm, trie: NameTrie, beam: int = PARADIGM_DEFAULTS["beam"],
                    theta: Optional[float] = None, max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]) -> list:
    """Mention-concept pairs of the best constrained hypothesis with segment score >= theta."""
    best = decode(doc, lm, trie, beam=beam, max_span_tokens=max_span_tokens)
    return segments_to_predictions(doc, best, -math.inf if theta is None else theta)


# --- Exhaustive reference decoder ---

class Markup(NamedTuple):
    text_logp: float
    logp: float
    tokens: tuple
    segments: tuple


def enumerate_markups(doc: Document, lm: BigramLm, trie: NameTrie,
                      max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]) -> list:
    """Every legal target sequence of the document, scored like the decoder scores it."""
    source = [t.token for t in tokenize(doc.text)]
    names = list(trie.paths())
    results = []

    def walk(i, tokens, spans):
        if i == len(source):
            results.append(score_markup(lm, tuple(tokens), spans))
            return
        walk(i + 1, tokens + [source[i]], spans)
        for length in range(1, min(max_span_tokens, len(source) - i) + 1):
            for path, concepts in names:
                start = len(tokens)
                seq = [MENTION_BEGIN, *source[i:i + length], MENTION_END, ENTITY_BEGIN, *path, ENTITY_END]
                walk(i + length, tokens + seq, spans + [(start, len(seq), i, i + length - 1, min(concepts))])

    walk(0, [], [])
    return results


def score_markup(lm: BigramLm, tokens: tuple, spans: list = ()) -> Markup:
    """Text-side and total log-likelihood of a target sequence, plus its segments."""
    lps = lm.token_log_probs(tokens)
    text = total = 0.0
    in_entity = False
    for token, lp in zip(tokens, lps):
        if token == ENTITY_BEGIN:
            in_entity = True
        if not in_entity:
            text += lp
        if token == ENTITY_END:
            in_entity = False
        total += lp
    segments = []
    for start, length, first, last, concept in spans:
        seg = 0.0
        for lp in lps[start:start + length]:
            seg += lp
        segments.append(Segment(first, last, concept, seg / length))
    return Markup(text, total, tokens, tuple(segments))


def best_markup(doc: Document, lm: BigramLm, trie: NameTrie,
                max_span_tokens: int = PARADIGM_DEFAULTS["max_span_tokens"]) -> Markup:
    """Exhaustive argmax with the decoder's ranking: text side, then full sequence, then token order."""
    return min(enumerate_markups(doc, lm, trie, max_span_tokens), key=lambda m: (-m.text_logp, -m.logp, m.tokens))
