"""Hashed trigram embeddings and exact nearest-concept search."""

import math
from collections import Counter

import numpy as np
import pytest

from src.embed import ConceptIndex, build_index, char_ngrams, cosine, embed_matrix, embed_text, nearest
from src.errors import EmptyIndexError
from src.kb import Selector, subset
from tests.conftest import make_kb

LETTERS = list("abcdefghij")


def random_word(rng, lo=3, hi=9) -> str:
    return "".join(rng.choice(LETTERS, size=int(rng.integers(lo, hi))))


def trigram_cosine(a: str, b: str) -> float:
    """Cosine over raw trigram counts, no hashing."""
    u, v = Counter(char_ngrams(a)), Counter(char_ngrams(b))
    dot = sum(c * v[g] for g, c in u.items())
    return dot / math.sqrt(sum(c * c for c in u.values()) * sum(c * c for c in v.values()))


def random_kb(rng, n_concepts: int):
    return make_kb([(f"C{i:03d}", random_word(rng), [random_word(rng) for _ in range(int(rng.integers(0, 3)))], [])
                    for i in range(n_concepts)])


class TestEmbedText:
    def test_three_trigrams_share_the_weight(self):
        assert char_ngrams("aba") == ["#ab", "aba", "ba#"]
        vec = embed_text("aba")
        assert len(vec) == 3
        np.testing.assert_allclose(list(vec.values()), [1 / math.sqrt(3)] * 3, rtol=1e-12)

    def test_empty_text_is_zero_vector(self):
        assert embed_text("") == {}
        assert cosine(embed_text(""), embed_text("anything")) == 0.0

    def test_lowercased(self):
        assert embed_text("Hypotension") == embed_text("hypotension")

    def test_unit_norm(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            vec = embed_text(random_word(rng, 1, 20))
            assert math.sqrt(sum(w * w for w in vec.values())) == pytest.approx(1.0, abs=1e-9)

    def test_related_words_are_closer(self):
        close = cosine(embed_text("hypotension"), embed_text("hypotensive"))
        far = cosine(embed_text("hypotension"), embed_text("sodium"))
        assert close == pytest.approx(trigram_cosine("hypotension", "hypotensive"), abs=1e-12)
        assert close > far


class TestCosine:
    def test_self_similarity(self):
        v = embed_text("blood pressure")
        assert cosine(v, v) == pytest.approx(1.0)

    def test_disjoint_trigrams(self):
        assert cosine(embed_text("aaa"), embed_text("zzz")) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            u, v = embed_text(random_word(rng)), embed_text(random_word(rng))
            assert cosine(u, v) == pytest.approx(cosine(v, u), abs=1e-15)

    def test_matrix_rows_match_vectors(self):
        texts = ["blood pressure", "", "sodium"]
        matrix = embed_matrix(texts)
        assert matrix.shape[0] == 3
        assert matrix[1].nnz == 0
        row = matrix[2]
        assert dict(zip(row.indices.tolist(), row.data.tolist())) == embed_text("sodium")


class TestBuildIndex:
    def test_one_entry_per_synonym(self):
        kb = make_kb([("A", "alpha", ["alfa", "alpha one"], [])])
        assert len(build_index(kb, cache_dir=None)) == 3

    def test_entry_count_matches_synonym_recount(self, blood_kb):
        index = build_index(blood_kb, cache_dir=None)
        assert len(index) == sum(len(c.synonyms) for c in blood_kb.iter_concepts())

    def test_partial_index_has_no_outside_concepts(self, sample_kb, medic):
        index = build_index(medic, cache_dir=None)
        assert set(index.entry_ids) == set(medic.member_ids)

    def test_cache_round_trip(self, tmp_path, blood_kb):
        built = build_index(blood_kb, cache_dir=str(tmp_path))
        cached = build_index(blood_kb, cache_dir=str(tmp_path))
        assert cached.entry_ids == built.entry_ids
        assert cached.entry_synonyms == built.entry_synonyms
        assert (cached.matrix != built.matrix).nnz == 0
        assert len(list(tmp_path.iterdir())) == 1

    def test_cache_key_changes_with_view(self, blood_kb):
        view = subset(blood_kb, Selector.from_type("Disease"))
        assert ConceptIndex.cache_key(view) != ConceptIndex.cache_key(blood_kb)


class TestNearest:
    def test_exact_synonym_ranks_first(self, blood_kb):
        index = build_index(blood_kb, cache_dir=None)
        concept, score = nearest(index, embed_text("hemorrhage"), 1)[0]
        assert concept == "B"
        assert score == pytest.approx(1.0)

    def test_ties_go_to_smaller_id(self, blood_kb):
        index = build_index(blood_kb, cache_dir=None)
        ranked = nearest(index, embed_text("cold"), 2)
        assert [c for c, _ in ranked] == ["C", "D"]
        assert ranked[0][1] == ranked[1][1]

    def test_at_most_k_distinct_concepts(self, blood_kb):
        ranked = nearest(build_index(blood_kb, cache_dir=None), embed_text("blood"), 10)
        assert len(ranked) == len(blood_kb)
        assert len({c for c, _ in ranked}) == len(ranked)

    def test_k_must_be_positive(self, blood_kb):
        with pytest.raises(ValueError):
            nearest(build_index(blood_kb, cache_dir=None), embed_text("x"), 0)

    def test_empty_index(self):
        index = ConceptIndex("empty", [], [], embed_matrix([]))
        with pytest.raises(EmptyIndexError):
            nearest(index, embed_text("x"), 1)

    def test_top1_matches_exhaustive_search(self):
        rng = np.random.default_rng(42)
        kb = random_kb(rng, 50)
        index = build_index(kb, cache_dir=None)
        vectors = {c.id: [embed_text(s) for s in c.synonyms] for c in kb.iter_concepts()}
        for _ in range(200):
            query = embed_text(random_word(rng))
            oracle = {cid: max(cosine(query, v) for v in vecs) for cid, vecs in vectors.items()}
            best = max(oracle.values())
            concept, score = nearest(index, query, 1)[0]
            assert score == pytest.approx(best, abs=1e-12)
            assert oracle[concept] == pytest.approx(best, abs=1e-12)

    def test_k_results_are_a_prefix_of_k_plus_one(self):
        rng = np.random.default_rng(7)
        index = build_index(random_kb(rng, 30), cache_dir=None)
        for _ in range(200):
            query = embed_text(random_word(rng))
            k = int(rng.integers(1, 29))
            assert nearest(index, query, k) == nearest(index, query, k + 1)[:k]

    def test_restricted_view_never_scores_higher(self):
        rng = np.random.default_rng(11)
        kb = random_kb(rng, 40)
        view = subset(kb, Selector.from_ids([f"C{i:03d}" for i in range(0, 40, 3)]))
        full, part = build_index(kb, cache_dir=None), build_index(view, cache_dir=None)
        for _ in range(200):
            query = embed_text(random_word(rng))
            concept, score = nearest(part, query, 1)[0]
            assert concept in view
            assert score <= nearest(full, query, 1)[0][1] + 1e-12
