"""
Synthetic benchmark module - a seeded KB, partial views and train/dev/test corpora.

Randomness comes from one pinned generator, xorshift64*, so the same seed produces
the same bytes on every platform:

    x ^= x >> 12
    x ^= (x << 25) mod 2^64
    x ^= x >> 27
    output = (x * 0x2545F4914F6CDD1D) mod 2^64

The initial state is splitmix64(seed), which is never zero for the seeds we use.
"""

import json
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from .corpus import Corpus, Document, GoldAnnotation, Span, write_corpus
from .kb import COMPLEMENT_MARK, KnowledgeBase, PartialKb, Selector, complement, make_concept, subset, write_kb, write_partial
from .errors import ConfigError, EmptyPartialError
from .logger import logger

MASK64 = (1 << 64) - 1
CONSONANTS = "bdfgklmnprstvz"
VOWELS = "aeiou"
LETTERS = "abcdefghijklmnopqrstuvwxyz"
FILLER_WORDS = (
    "the", "and", "of", "with", "in", "for", "from", "than", "after", "during",
    "patients", "showed", "treatment", "observed", "study", "were", "reported", "this",
    "levels", "increased", "significant", "between", "group", "clinical", "effects",
    "cases", "which", "each", "both", "these", "their", "followed", "response", "trial",
    "blood", "strong", "chronic", "acute", "doses", "onset",
)


class SynthConfig(BaseModel):
    """Generator settings; ranges are inclusive (min, max) pairs."""
    seed: int = Field(default=42, ge=0)
    n_concepts: int = Field(default=500, ge=1)
    synonyms_per_concept: tuple[int, int] = (1, 3)
    n_types: int = Field(default=4, ge=1)
    train_docs: int = Field(default=400, ge=1)
    dev_docs: int = Field(default=100, ge=1)
    test_docs: int = Field(default=200, ge=1)
    mentions_per_doc: tuple[int, int] = (2, 5)
    filler_tokens_between: tuple[int, int] = (1, 4)
    surface_noise_prob: float = Field(default=0.05, ge=0.0, le=1.0)
    partial_fraction: float = Field(default=0.4, gt=0.0, lt=1.0)
    extra_fractions: list[float] = Field(default_factory=list)
    zipf_exponent: float = Field(default=1.0, ge=0.0)

    @field_validator("synonyms_per_concept", "mentions_per_doc", "filler_tokens_between")
    @classmethod
    def validate_range(cls, v):
        lo, hi = v
        if lo < 1 or hi < lo:
            raise ValueError(f"range must satisfy 1 <= min <= max, got {v}")
        return v

    @field_validator("extra_fractions")
    @classmethod
    def validate_fractions(cls, v):
        if any(not 0.0 < f < 1.0 for f in v):
            raise ValueError("extra fractions must lie in (0, 1)")
        return v


class XorShift64Star:
    """xorshift64* generator; see the module docstring for the update equations."""

    MULTIPLIER = 0x2545F4914F6CDD1D

    def __init__(self, seed: int):
        self.state = self._splitmix64(seed) or 0x9E3779B97F4A7C15

    @staticmethod
    def _splitmix64(seed: int) -> int:
        z = (seed + 0x9E3779B97F4A7C15) & MASK64
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * self.MULTIPLIER) & MASK64

    def random(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.next_u64() % (hi - lo + 1)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> list:
        """Fisher-Yates, in place."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
        return items


class SynthBenchmark(NamedTuple):
    kb: KnowledgeBase
    partials: list
    train: Corpus
    dev: Corpus
    test: Corpus


# --- KB ---

def _token(rng: XorShift64Star) -> str:
    return "".join(rng.choice(CONSONANTS) + rng.choice(VOWELS) for _ in range(rng.randint(2, 3)))


def _name(rng: XorShift64Star) -> str:
    return " ".join(_token(rng) for _ in range(rng.randint(2, 3)))


def _substitute(rng: XorShift64Star, text: str, position: int) -> str:
    replacement = rng.choice(LETTERS)
    while replacement == text[position]:
        replacement = rng.choice(LETTERS)
    return text[:position] + replacement + text[position + 1:]


def _variant(rng: XorShift64Star, name: str) -> str:
    """Edit-distance-1 variant: one letter substituted."""
    positions = [i for i, ch in enumerate(name) if ch != " "]
    return _substitute(rng, name, rng.choice(positions))


def generate_kb(config: SynthConfig, rng: XorShift64Star) -> KnowledgeBase:
    used = set()
    concepts = {}
    for i in range(config.n_concepts):
        name = _name(rng)
        while name in used:
            name = _name(rng)
        used.add(name)

        synonyms = []
        target = rng.randint(*config.synonyms_per_concept) - 1
        attempts = 0
        while len(synonyms) < target and attempts < 20 * (target + 1):
            attempts += 1
            variant = _variant(rng, name)
            if variant not in used:
                used.add(variant)
                synonyms.append(variant)

        concept_id = f"C{i:05d}"
        semantic_type = f"T{rng.randint(1, config.n_types):03d}"
        concepts[concept_id] = make_concept(concept_id, name, synonyms, [semantic_type])
    return KnowledgeBase(name="synth", concepts=concepts)


# --- Partial views ---

def sample_partial(kb: KnowledgeBase, fraction: float, rng: XorShift64Star, name: str) -> PartialKb:
    """Exactly round(fraction * |kb|) ids, at least one, sampled without replacement."""
    ids = sorted(kb.member_ids)
    n = min(len(ids), max(1, round(fraction * len(ids))))
    chosen = rng.shuffle(ids)[:n]
    return subset(kb, Selector.from_ids(chosen), name=name)


def generate_partials(kb: KnowledgeBase, config: SynthConfig, rng: XorShift64Star) -> list:
    """Id-sampled views, one view per semantic type, and the complement of each."""
    bases = [sample_partial(kb, config.partial_fraction, rng, "sample")]
    for fraction in config.extra_fractions:
        bases.append(sample_partial(kb, fraction, rng, f"sample{round(100 * fraction):02d}"))
    types = sorted({t for c in kb.iter_concepts() for t in c.semantic_types})
    bases.extend(subset(kb, Selector.from_type(t)) for t in types)

    partials = []
    for view in bases:
        partials.append(view)
        try:
            partials.append(complement(kb, view))
        except EmptyPartialError:
            logger.warning(f"View '{view.name}' covers the whole KB; no complement generated")
    return partials


# --- Corpora ---

def _zipf_weights(n: int, exponent: float, rng: XorShift64Star) -> np.ndarray:
    """Frequency weight per concept position; ranks are shuffled so frequency is independent of id."""
    ranks = rng.shuffle(list(range(1, n + 1)))
    weights = np.asarray(ranks, dtype=np.float64) ** -exponent
    return np.cumsum(weights / weights.sum())


def _corrupt(rng: XorShift64Star, surface: str, p: float) -> str:
    if p <= 0.0:
        return surface
    for i, ch in enumerate(surface):
        if ch != " " and rng.random() < p:
            surface = _substitute(rng, surface, i)
    return surface


def generate_corpus(kb: KnowledgeBase, split: str, n_docs: int, cumulative: np.ndarray,
                    config: SynthConfig, rng: XorShift64Star) -> Corpus:
    concepts = list(kb.iter_concepts())
    documents = {}
    annotations = []
    for d in range(n_docs):
        doc_id = f"{split}-{d:05d}"
        parts = []
        length = 0

        def emit(piece: str) -> int:
            nonlocal length
            if parts:
                parts.append(" ")
                length += 1
            start = length
            parts.append(piece)
            length += len(piece)
            return start

        for m in range(rng.randint(*config.mentions_per_doc)):
            for _ in range(rng.randint(*config.filler_tokens_between)):
                emit(rng.choice(FILLER_WORDS))
            index = min(int(np.searchsorted(cumulative, rng.random(), side="right")), len(concepts) - 1)
            concept = concepts[index]
            surface = _corrupt(rng, rng.choice(concept.synonyms), config.surface_noise_prob)
            start = emit(surface)
            annotations.append(GoldAnnotation(doc_id, Span(start, start + len(surface)), concept.id))
        for _ in range(rng.randint(*config.filler_tokens_between)):
            emit(rng.choice(FILLER_WORDS))
        documents[doc_id] = Document(doc_id, "".join(parts) + ".")
    return Corpus(split=split, documents=documents, annotations=tuple(annotations))


def generate(config: SynthConfig) -> SynthBenchmark:
    """KB, partial views and three corpus splits, fully determined by config.seed."""
    rng = XorShift64Star(config.seed)
    kb = generate_kb(config, rng)
    partials = generate_partials(kb, config, rng)
    cumulative = _zipf_weights(len(kb), config.zipf_exponent, rng)
    train = generate_corpus(kb, "train", config.train_docs, cumulative, config, rng)
    dev = generate_corpus(kb, "dev", config.dev_docs, cumulative, config, rng)
    test = generate_corpus(kb, "test", config.test_docs, cumulative, config, rng)
    logger.info(
        f"Generated synthetic benchmark (seed={config.seed}): {len(kb)} concepts, {len(partials)} views, "
        f"{len(train.annotations)}/{len(dev.annotations)}/{len(test.annotations)} train/dev/test annotations"
    )
    return SynthBenchmark(kb, partials, train, dev, test)


def view_filename(view_name: str) -> str:
    return view_name.replace(COMPLEMENT_MARK, "_complement") + ".txt"


def write_benchmark(bench: SynthBenchmark, out_dir: Union[str, Path]) -> Path:
    """<kb name>.jsonl, views/<view>.txt and <split>.jsonl under out_dir; the file stem keeps view parents valid."""
    out_dir = Path(out_dir)
    (out_dir / "views").mkdir(parents=True, exist_ok=True)
    write_kb(bench.kb, out_dir / f"{bench.kb.name}.jsonl")
    for view in bench.partials:
        write_partial(view, out_dir / "views" / view_filename(view.name))
    for corpus in (bench.train, bench.dev, bench.test):
        write_corpus(corpus, out_dir / f"{corpus.split}.jsonl")
    return out_dir


def load_synth_config(path: Union[str, Path]) -> SynthConfig:
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    try:
        return SynthConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid synth config {path}: {e.errors()[0].get('msg', str(e))}") from e
