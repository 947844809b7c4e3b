"""KB loading, subsetting and complements, including the complement-partition property."""

import numpy as np
import pytest

from src.errors import (
    DuplicateConceptError,
    EmptyKbError,
    EmptyPartialError,
    KbFormatError,
    ParentMismatchError,
)
from src.kb import Selector, complement, load_kb, load_partial, make_concept, resolve_view, subset, write_partial
from tests.conftest import make_kb


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadKb:
    def test_two_valid_lines(self, tmp_path):
        path = _write(tmp_path / "tiny.jsonl", [
            '{"id": "A", "name": "alpha", "synonyms": ["alfa"], "types": ["T1"]}',
            '{"id": "B", "name": "beta"}',
        ])
        kb = load_kb(path)
        assert len(kb) == 2
        assert kb.name == "tiny"
        assert kb.get("B").synonyms == ("beta",)

    def test_canonical_name_injected_first(self):
        concept = make_concept("A", "Alpha", ["alfa", "ALPHA", "alfa"])
        assert concept.synonyms == ("Alpha", "alfa")
        assert concept.canonical_name == "Alpha"

    def test_duplicate_id_names_the_concept(self, tmp_path):
        path = _write(tmp_path / "dup.jsonl", ['{"id": "X", "name": "x"}', '{"id": "X", "name": "y"}'])
        with pytest.raises(DuplicateConceptError, match="'X'") as info:
            load_kb(path)
        assert info.value.kind == "duplicate_concept"

    def test_parse_error_reports_line(self, tmp_path):
        path = _write(tmp_path / "bad.jsonl", ['{"id": "A", "name": "a"}', '{"id": "B"}'])
        with pytest.raises(KbFormatError) as info:
            load_kb(path)
        assert info.value.line_no == 2

    def test_blank_name_rejected(self, tmp_path):
        path = _write(tmp_path / "blank.jsonl", ['{"id": "A", "name": "   "}'])
        with pytest.raises(KbFormatError):
            load_kb(path)

    def test_empty_file(self, tmp_path):
        path = _write(tmp_path / "empty.jsonl", [""])
        with pytest.raises(EmptyKbError):
            load_kb(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_kb(tmp_path / "nope.jsonl")


class TestSubset:
    def test_by_semantic_type(self, blood_kb):
        view = subset(blood_kb, Selector.from_type("Disease"))
        assert view.member_ids == {"B", "C"}
        assert view.name == "Disease"
        assert view.parent == "blood"
        assert view.is_proper

    def test_ids_absent_from_kb_are_dropped(self, blood_kb):
        view = subset(blood_kb, Selector.from_ids(["A", "ZZZ"]), name="a-only")
        assert view.member_ids == {"A"}

    def test_names_match_any_synonym(self, blood_kb):
        view = subset(blood_kb, Selector.from_entries(["Cold", "E", "unknown thing"]), name="names")
        # "cold" is a synonym of both C and D
        assert view.member_ids == {"C", "D", "E"}

    def test_empty_selection(self, blood_kb):
        with pytest.raises(EmptyPartialError):
            subset(blood_kb, Selector.from_ids(["nothing"]))

    def test_whole_kb_is_allowed_but_not_proper(self, blood_kb):
        view = subset(blood_kb, Selector.from_ids(list(blood_kb.member_ids)))
        assert not view.is_proper

    def test_sample_medic_view(self, sample_kb, medic):
        assert medic.name == "MEDIC"
        assert medic.parent == "kb"
        assert len(medic) == 7
        assert "D007022" in medic and "D007213" not in medic

    def test_resolve_view_defaults_to_training_kb(self, blood_kb):
        assert resolve_view(blood_kb, None) is blood_kb


class TestPartialFiles:
    def test_written_view_loads_back(self, tmp_path, blood_kb):
        view = subset(blood_kb, Selector.from_type("Disease"), name="diseases")
        write_partial(view, tmp_path / "diseases.txt")
        loaded = load_partial(blood_kb, tmp_path / "diseases.txt")
        assert loaded.name == "diseases"
        assert loaded.member_ids == view.member_ids

    def test_parent_mismatch(self, tmp_path, blood_kb):
        path = _write(tmp_path / "other.txt", ["# view: other", "# parent: umls", "A"])
        with pytest.raises(ParentMismatchError):
            load_partial(blood_kb, path)


class TestComplement:
    def test_names_and_members(self, blood_kb):
        view = subset(blood_kb, Selector.from_type("Disease"))
        comp = complement(blood_kb, view)
        assert comp.name == "Disease∁"
        assert comp.member_ids == {"A", "D", "E"}
        assert complement(blood_kb, comp).name == "Disease"

    def test_complement_of_whole_kb_is_empty(self, blood_kb):
        view = subset(blood_kb, Selector.from_ids(list(blood_kb.member_ids)))
        with pytest.raises(EmptyPartialError):
            complement(blood_kb, view)

    def test_foreign_view(self, blood_kb):
        other = make_kb([("A", "a", [], [])], name="other")
        with pytest.raises(ParentMismatchError):
            complement(blood_kb, subset(other, Selector.from_ids(["A"])))

    def test_partition_property(self):
        """A view and its complement are disjoint and together cover the KB."""
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            kb = make_kb([(f"C{i:03d}", f"name {i}", [], [f"T{i % 3}"]) for i in range(n)])
            size = int(rng.integers(1, n))
            ids = [f"C{i:03d}" for i in rng.choice(n, size=size, replace=False)]
            view = subset(kb, Selector.from_ids(ids))
            comp = complement(kb, view)
            assert view.member_ids.isdisjoint(comp.member_ids)
            assert view.member_ids | comp.member_ids == kb.member_ids

    def test_complement_is_an_involution(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 30))
            kb = make_kb([(f"C{i:03d}", f"name {i}", [], [f"T{i % 3}"]) for i in range(n)])
            ids = [f"C{i:03d}" for i in rng.choice(n, size=int(rng.integers(1, n)), replace=False)]
            view = subset(kb, Selector.from_ids(ids), name=f"v{int(rng.integers(100))}")
            assert complement(kb, complement(kb, view)) == view

    def test_subset_is_idempotent(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            kb = make_kb([(f"C{i:03d}", f"name {i}", [], [f"T{i % 3}"]) for i in range(n)])
            if rng.random() < 0.5:
                view = subset(kb, Selector.from_type(f"T{int(rng.integers(min(n, 3)))}"))
            else:
                ids = [f"C{i:03d}" for i in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)]
                view = subset(kb, Selector.from_ids(ids))
            again = subset(kb, Selector.from_ids(view.member_ids), name=view.name)
            assert again == view
            assert subset(kb, Selector.from_ids(again.member_ids), name=again.name) == again
