"""Corpus loading, tokenization, gold restriction and dataset statistics."""

import json

import numpy as np
import pytest

from src.corpus import Span, load_corpus, restrict_gold, stats, stats_table, tokenize
from src.errors import CorpusFormatError, DanglingDocumentError, SpanOutOfRangeError
from src.kb import Selector, complement, subset
from tests.conftest import make_corpus, make_kb


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    return path


class TestTokenize:
    def test_sample_sentence(self):
        tokens = tokenize("Indomethacin induced hypotension")
        assert [t.token for t in tokens] == ["indomethacin", "induced", "hypotension"]
        assert [t.span for t in tokens] == [Span(0, 12), Span(13, 20), Span(21, 32)]

    def test_empty(self):
        assert tokenize("") == []

    def test_punctuation_separates(self):
        assert [t.token for t in tokenize("4 mg/kg")] == ["4", "mg", "kg"]

    def test_underscore_is_a_separator(self):
        assert [t.token for t in tokenize("a_b")] == ["a", "b"]


class TestLoadCorpus:
    def test_one_document(self, tmp_path):
        path = _write_jsonl(tmp_path / "train.jsonl", [
            {"doc_id": "d", "text": "hello brave world", "annotations": [
                {"start": 0, "end": 5, "concept": "A"}, {"start": 12, "end": 17, "concept": "B"}]},
        ])
        corpus = load_corpus(path)
        assert corpus.split == "train"
        assert len(corpus.annotations) == 2

    def test_composite_concepts_split(self, tmp_path):
        path = _write_jsonl(tmp_path / "c.jsonl", [
            {"doc_id": "d", "text": "hello", "annotations": [{"start": 0, "end": 5, "concept": "A|B"}]},
        ])
        assert {a.concept for a in load_corpus(path).annotations} == {"A", "B"}

    def test_annotation_only_lines_attach_to_document(self, tmp_path):
        path = _write_jsonl(tmp_path / "c.jsonl", [
            {"doc_id": "d", "text": "hello world"},
            {"doc_id": "d", "annotations": [{"start": 6, "end": 11, "concept": "W"}]},
        ])
        assert load_corpus(path).gold_for("d")[0].span == Span(6, 11)

    def test_span_out_of_range(self, tmp_path):
        path = _write_jsonl(tmp_path / "c.jsonl", [
            {"doc_id": "d", "text": "hello", "annotations": [{"start": 0, "end": 6, "concept": "A"}]},
        ])
        with pytest.raises(SpanOutOfRangeError):
            load_corpus(path)

    def test_dangling_document(self, tmp_path):
        path = _write_jsonl(tmp_path / "c.jsonl", [
            {"doc_id": "ghost", "annotations": [{"start": 0, "end": 1, "concept": "A"}]},
        ])
        with pytest.raises(DanglingDocumentError):
            load_corpus(path)

    def test_parse_error(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"doc_id": "d", "text": "x"}\n{"doc_id": \n', encoding="utf-8")
        with pytest.raises(CorpusFormatError) as info:
            load_corpus(path)
        assert info.value.line_no == 2

    def test_concepts_outside_kb_dropped(self, sample_kb, sample_corpora):
        assert all(a.concept in sample_kb for a in sample_corpora["test"].annotations)
        assert len(sample_corpora["test"].annotations) == 6


class TestRestrictGold:
    def test_keeps_view_concepts_and_all_documents(self):
        kb = make_kb([("A", "a", [], []), ("B", "b", [], [])])
        corpus = make_corpus("test", {"d": "aaaaa bb", "e": "b"}, [("d", 0, 5, "A"), ("d", 6, 8, "B"), ("e", 0, 1, "B")])
        restricted = restrict_gold(corpus, subset(kb, Selector.from_ids(["A"])))
        assert [(a.doc_id, a.span, a.concept) for a in restricted.annotations] == [("d", Span(0, 5), "A")]
        assert set(restricted.documents) == {"d", "e"}

    def test_training_kb_is_identity(self, sample_kb, sample_corpora):
        train = sample_corpora["train"]
        assert restrict_gold(train, sample_kb).annotations == train.annotations

    def test_view_and_complement_partition_gold(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            ids = [f"C{i}" for i in range(n)]
            kb = make_kb([(c, f"n{c}", [], []) for c in ids])
            gold = [("d", int(s), int(s) + 1, ids[int(rng.integers(n))]) for s in rng.integers(0, 20, size=15)]
            corpus = make_corpus("dev", {"d": "x" * 21}, gold)
            chosen = rng.choice(n, size=int(rng.integers(1, n)), replace=False)
            view = subset(kb, Selector.from_ids([ids[int(i)] for i in chosen]))
            inside = restrict_gold(corpus, view).annotations
            outside = restrict_gold(corpus, complement(kb, view)).annotations
            assert set(inside).isdisjoint(outside)
            assert set(inside) | set(outside) == set(corpus.annotations)

    def test_restriction_is_idempotent_and_monotone(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(2, 12))
            ids = [f"C{i}" for i in range(n)]
            kb = make_kb([(c, f"n{c}", [], []) for c in ids])
            gold = [("d", int(s), int(s) + 1, ids[int(rng.integers(n))]) for s in rng.integers(0, 20, size=15)]
            corpus = make_corpus("dev", {"d": "x" * 21}, gold)
            larger = [ids[int(i)] for i in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)]
            smaller = larger[: int(rng.integers(1, len(larger) + 1))]
            big = subset(kb, Selector.from_ids(larger), name="big")
            small = subset(kb, Selector.from_ids(smaller), name="small")

            once = restrict_gold(corpus, small)
            assert restrict_gold(once, small).annotations == once.annotations
            assert set(once.annotations) <= set(restrict_gold(corpus, big).annotations)
            assert restrict_gold(restrict_gold(corpus, big), small).annotations == once.annotations


class TestStats:
    def test_sample_test_split_against_medic(self, sample_corpora, medic):
        s = stats(sample_corpora["test"], medic, train_corpus=sample_corpora["train"])
        assert s.view == "MEDIC"
        assert s.n_concepts == 7
        assert s.n_annotations == 1
        assert s.n_annotated_concepts == 1
        assert s.n_annotations_in_train == 1
        assert s.n_concepts_in_train == 1
        # 6 of the 11 training annotations are MEDIC diseases
        assert s.annotation_proportion == pytest.approx(6 / 11)

    def test_proportions_of_view_and_complement_sum_to_one(self, sample_kb, sample_corpora, medic):
        train = sample_corpora["train"]
        p = stats(train, medic, train).annotation_proportion
        q = stats(train, complement(sample_kb, medic), train).annotation_proportion
        assert p + q == pytest.approx(1.0)

    def test_no_train_corpus_leaves_train_columns_empty(self, sample_corpora, medic):
        s = stats(sample_corpora["dev"], medic)
        assert s.annotation_proportion is None and s.n_annotations_in_train is None

    def test_same_span_collision_counted(self):
        kb = make_kb([("A", "a", [], []), ("B", "b", [], [])])
        corpus = make_corpus("test", {"d": "abc"}, [("d", 0, 3, "A"), ("d", 0, 3, "B")])
        assert stats(corpus, subset(kb, Selector.from_ids(["A"]))).same_span_collisions == 1

    def test_table_has_one_row_per_view_and_split(self, sample_kb, sample_corpora, medic):
        splits = [sample_corpora[s] for s in ("train", "dev", "test")]
        table = stats_table(splits, [medic, complement(sample_kb, medic)], train_corpus=sample_corpora["train"])
        assert len(table) == 6
        assert list(table["view"].unique()) == ["MEDIC", "MEDIC∁"]
