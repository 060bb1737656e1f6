"""Knowledge-base grouping, overload resolution, and doc concatenation."""

import pytest

from comgen.apikb import (
    ApiDocEntry, ApiDocKb, build_kb, docs_for_method, load_entries,
    resolve_doc, resolved_calls,
)
from comgen.corpus import SEP_TOKEN
from comgen.javaparse import ApiCall


def entry(name, arity, cls, desc):
    return ApiDocEntry(name, arity, cls, desc)


class TestBuildKb:
    def test_identical_texts_grouped_with_frequency(self):
        kb = build_kb([
            entry("toString", 0, "a.A", "Returns a string."),
            entry("toString", 0, "b.B", "Returns a string."),
            entry("toString", 0, "c.C", "Gives a different text."),
        ])
        cands = kb.candidates("toString", 0)
        assert cands == [("Returns a string.", 2), ("Gives a different text.", 1)]

    def test_empty_input(self):
        kb = build_kb([])
        assert len(kb) == 0

    def test_rejects_empty_name_or_description(self):
        kb = build_kb([
            entry("", 0, "a.A", "text"),
            entry("x", 0, "a.A", "   "),
            entry("ok", 0, "a.A", "fine"),
        ])
        assert kb.rejected == 2 and len(kb) == 1

    def test_same_class_same_text_counted_once(self):
        kb = build_kb([
            entry("f", 0, "a.A", "same"),
            entry("f", 0, "a.A", "same"),
            entry("f", 0, "b.B", "same"),
        ])
        assert kb.candidates("f", 0) == [("same", 2)]

    def test_ordering_frequency_then_lexicographic(self):
        kb = build_kb([
            entry("g", 1, "a.A", "beta text"),
            entry("g", 1, "b.B", "alpha text"),
        ])
        assert kb.candidates("g", 1) == [("alpha text", 1), ("beta text", 1)]


class TestResolveDoc:
    def test_bundled_entries_resolve(self, mini_kb):
        doc = resolve_doc(mini_kb, ApiCall("isSynthetic", 0))
        assert doc == ("Returns true if this executable is a synthetic "
                       "construct; returns false otherwise.")
        assert resolve_doc(mini_kb, ApiCall("flush", 0)) == "Flushes the stream."

    def test_highest_frequency_wins(self, mini_kb):
        # three bundled classes share one flush text, one differs
        cands = mini_kb.candidates("flush", 0)
        assert cands[0] == ("Flushes the stream.", 3)
        assert len(cands) == 2

    def test_unknown_name_is_none(self, mini_kb):
        assert resolve_doc(mini_kb, ApiCall("noSuchApi", 3)) is None

    def test_arity_miss_with_name_hit_is_none(self, mini_kb):
        assert resolve_doc(mini_kb, ApiCall("charAt", 1)) is not None
        assert resolve_doc(mini_kb, ApiCall("charAt", 2)) is None

    def test_tie_breaks_lexicographically(self):
        kb = build_kb([
            entry("t", 0, "a.A", "zz later text"),
            entry("t", 0, "b.B", "aa earlier text"),
        ])
        assert resolve_doc(kb, ApiCall("t", 0)) == "aa earlier text"

    def test_deterministic_across_rebuilds(self):
        entries = [entry("m", 1, f"c{i}.C{i}", f"text {i % 3}")
                   for i in range(9)]
        a = build_kb(entries)
        b = build_kb(list(reversed(entries)))
        assert a.candidates("m", 1) == b.candidates("m", 1)


class TestDocsForMethod:
    def test_zero_apis_empty_sequence(self, mini_kb):
        assert docs_for_method(mini_kb, []) == []
        assert docs_for_method(mini_kb, [ApiCall("nothere", 9)]) == []

    def test_consecutive_repeats_deduplicated(self, mini_kb):
        calls = [ApiCall("indexOf", 1), ApiCall("indexOf", 1)]
        once = docs_for_method(mini_kb, [ApiCall("indexOf", 1)])
        assert docs_for_method(mini_kb, calls) == once
        # a miss between repeats still leaves them consecutive after dropping
        calls = [ApiCall("indexOf", 1), ApiCall("zzz", 0), ApiCall("indexOf", 1)]
        assert docs_for_method(mini_kb, calls) == once

    def test_docs_joined_by_sep_in_call_order(self, mini_kb):
        calls = [ApiCall("trim", 0), ApiCall("charAt", 1)]
        toks = docs_for_method(mini_kb, calls)
        assert toks.count(SEP_TOKEN) == 1
        cut = toks.index(SEP_TOKEN)
        assert toks[:cut][:3] == ["returns", "a", "string"]
        assert toks[cut + 1:][:3] == ["returns", "the", "char"]

    def test_descriptions_not_first_sentence_truncated(self):
        kb = build_kb([entry("two", 0, "a.A", "First part. Second part.")])
        toks = docs_for_method(kb, [ApiCall("two", 0)])
        assert toks == ["first", "part", "second", "part"]

    def test_truncation_to_max_doc_len(self, mini_kb):
        calls = [ApiCall("indexOf", 1), ApiCall("substring", 2),
                 ApiCall("replace", 2)]
        toks = docs_for_method(mini_kb, calls, max_doc_len=7)
        assert len(toks) == 7

    def test_resolved_calls_order(self, mini_kb):
        calls = [ApiCall("charAt", 1), ApiCall("length", 0)]
        resolved = resolved_calls(mini_kb, calls)
        assert [c.name for c, _ in resolved] == ["charAt", "length"]


class TestPersistence:
    def test_save_load_roundtrip(self, mini_kb, tmp_path):
        path = tmp_path / "kb.bin"
        mini_kb.save(path)
        again = ApiDocKb.load(path)
        assert again.index == mini_kb.index

    def test_bad_format_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_text('{"format": "something-else", "version": 1}')
        with pytest.raises(ValueError):
            ApiDocKb.load(path)

    def test_bundled_tsv_shape(self, mini_kb):
        from comgen.fixtures import mini_kb_path
        entries = load_entries(mini_kb_path())
        assert len(entries) == 50
        assert all(e.description for e in entries)
