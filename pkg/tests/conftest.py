"""Shared fixtures: the sample KB and corpora under data/sample, small hand-built KBs, and the seeded synthetic benchmark."""

import json
from pathlib import Path

import pytest

from src.corpus import Corpus, Document, GoldAnnotation, Span, load_corpus
from src.kb import KnowledgeBase, load_kb, load_partial, make_concept
from src.predictions import ScoredPrediction
from src.synth import SynthConfig, generate, write_benchmark

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
SAMPLE_DIR = DATA_DIR / "sample"

SAMPLE_TEXT = (
    "Indomethacin induced hypotension in sodium and volume depleted rats. After a single oral dose of "
    "4 mg/kg indomethacin (IDM) to sodium and volume depleted rats plasma renin activity (PRA) and "
    "systolic blood pressure fell significantly within four hours."
)


def make_kb(entries, name="kb") -> KnowledgeBase:
    """entries: (id, name, synonyms, types) tuples."""
    concepts = {}
    for concept_id, concept_name, synonyms, types in entries:
        concepts[concept_id] = make_concept(concept_id, concept_name, synonyms, types)
    return KnowledgeBase(name=name, concepts=concepts)


def make_corpus(split, docs, gold) -> Corpus:
    """docs: doc_id -> text; gold: (doc_id, start, end, concept) tuples."""
    documents = {doc_id: Document(doc_id, text) for doc_id, text in docs.items()}
    annotations = tuple(GoldAnnotation(d, Span(s, e), c) for d, s, e, c in gold)
    return Corpus(split=split, documents=documents, annotations=annotations)


def pred(doc_id, start, end, concept, score=1.0, paradigm="") -> ScoredPrediction:
    return ScoredPrediction(doc_id, Span(start, end), concept, score, paradigm)


@pytest.fixture
def sample_kb():
    return load_kb(SAMPLE_DIR / "kb.jsonl")


@pytest.fixture
def medic(sample_kb):
    return load_partial(sample_kb, SAMPLE_DIR / "medic.txt")


@pytest.fixture
def sample_corpora(sample_kb):
    return {split: load_corpus(SAMPLE_DIR / f"{split}.jsonl", split=split, kb=sample_kb) for split in ("train", "dev", "test")}


@pytest.fixture
def sample_doc():
    return Document("6794356", SAMPLE_TEXT)


@pytest.fixture
def blood_kb():
    return make_kb([
        ("A", "blood pressure", ["bp"], ["Physiology"]),
        ("B", "blood loss", ["hemorrhage"], ["Disease"]),
        ("C", "cold", ["common cold"], ["Disease"]),
        ("D", "cold temperature", ["cold"], ["Phenomenon"]),
        ("E", "pressure", [], ["Phenomenon"]),
    ], name="blood")


@pytest.fixture
def training_kb_predictions():
    """A NER-NED system inferring with the training KB on the sample document; scores are cosines."""
    return [
        pred("6794356", 0, 12, "D007213", 1.0),
        pred("6794356", 21, 32, "D007022", 1.0),
        pred("6794356", 36, 53, "D005441", 0.61),
        pred("6794356", 105, 117, "D007213", 1.0),
        pred("6794356", 119, 122, "D003922", 0.94),
        pred("6794356", 127, 133, "D012964", 1.0),
    ]


@pytest.fixture
def partial_view_predictions():
    """The same system inferring directly with the partial view."""
    return [
        pred("6794356", 0, 12, "C564365", 0.35),
        pred("6794356", 21, 32, "D007022", 1.00),
        pred("6794356", 36, 53, "D003681", 0.43),
        pred("6794356", 105, 117, "C564365", 0.35),
        pred("6794356", 119, 122, "D003922", 0.94),
        pred("6794356", 127, 133, "D000747", 0.38),
    ]


# --- Synthetic benchmark ---

def small_synth_config(**overrides) -> SynthConfig:
    params = dict(seed=7, n_concepts=60, n_types=3, train_docs=40, dev_docs=15, test_docs=15,
                  mentions_per_doc=(1, 3), filler_tokens_between=(1, 2))
    params.update(overrides)
    return SynthConfig(**params)


@pytest.fixture(scope="session")
def small_bench():
    return generate(small_synth_config())


@pytest.fixture(scope="session")
def small_bench_dir(tmp_path_factory, small_bench):
    return write_benchmark(small_bench, tmp_path_factory.mktemp("small_bench"))


def write_run_config(path: Path, bench_dir: Path, out_dir: Path, paradigm: str, mode: str = "direct",
                     partial=None, **paradigm_options) -> Path:
    """Write a run config over a benchmark directory laid out by write_benchmark."""
    config = {
        "kb": str(bench_dir / "synth.jsonl"),
        "partial": partial,
        "train": str(bench_dir / "train.jsonl"),
        "dev": str(bench_dir / "dev.jsonl"),
        "test": str(bench_dir / "test.jsonl"),
        "output_dir": str(out_dir),
        "paradigm": {"paradigm": paradigm, **paradigm_options},
        "mode": mode,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2)
    return path
