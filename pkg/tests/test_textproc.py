import json

import pytest
from hypothesis import given, settings, strategies as st

from evidkit.textproc import (
    AlignmentError,
    NormConfig,
    TokenSpan,
    align_span,
    default_norm_config,
    load_norm_config,
    normalize_terms,
    term_overlap,
    tokenize,
    word_count,
)


def surfaces(text):
    return [t.surface for t in tokenize(text).tokens]


def offsets(text):
    return [(t.begin, t.end) for t in tokenize(text).tokens]


class TestTokenize:
    def test_abbreviation_with_period(self):
        assert surfaces("C. difficile") == ["C", ".", "difficile"]
        assert offsets("C. difficile") == [(0, 1), (1, 2), (3, 12)]

    def test_empty(self):
        assert len(tokenize("")) == 0

    def test_comma_and_double_space(self):
        # maximal alnum runs, one token per punctuation char, whitespace skipped
        assert surfaces("HTN,  stable") == ["HTN", ",", "stable"]
        assert offsets("HTN,  stable") == [(0, 3), (3, 4), (6, 12)]

    def test_each_punct_char_is_a_token(self):
        assert surfaces("a--b") == ["a", "-", "-", "b"]
        assert surfaces("x_y") == ["x", "_", "y"]

    def test_word_count_skips_punct(self):
        assert word_count("Gastro-esophageal reflux.") == 3

    @settings(max_examples=300)
    @given(st.text())
    def test_offsets_ordered_and_reconstruct(self, text):
        doc = tokenize(text)
        prev_end = 0
        rebuilt = []
        for i, t in enumerate(doc.tokens):
            assert t.index == i
            assert t.begin < t.end
            assert t.begin >= prev_end
            gap = text[prev_end:t.begin]
            assert gap.strip() == "" or all(c.isspace() for c in gap)
            rebuilt.append(gap)
            rebuilt.append(t.surface)
            assert text[t.begin:t.end] == t.surface
            prev_end = t.end
        rebuilt.append(text[prev_end:])
        assert "".join(rebuilt) == text
        assert text[prev_end:].strip() == ""

    @given(st.text())
    def test_deterministic(self, text):
        assert tokenize(text) == tokenize(text)


class TestAlign:
    doc = tokenize("severe hypertension")

    def test_exact_boundary(self):
        assert align_span(self.doc, 7, 19) == TokenSpan(1, 1)

    def test_mid_word(self):
        assert align_span(self.doc, 9, 12) == TokenSpan(1, 1)

    def test_whitespace_only(self):
        with pytest.raises(AlignmentError):
            align_span(self.doc, 6, 7)

    def test_out_of_bounds(self):
        with pytest.raises(AlignmentError):
            align_span(self.doc, 0, 50)

    def test_multi_token(self):
        assert align_span(self.doc, 3, 10) == TokenSpan(0, 1)

    @given(st.text(min_size=1))
    def test_token_roundtrip(self, text):
        doc = tokenize(text)
        for t in doc.tokens:
            assert align_span(doc, t.begin, t.end) == TokenSpan(t.index, t.index)

    @given(st.text(alphabet="ab ,.", min_size=1, max_size=40), st.data())
    def test_brute_force_overlap(self, text, data):
        doc = tokenize(text)
        b = data.draw(st.integers(0, len(text) - 1))
        e = data.draw(st.integers(b + 1, len(text)))
        hits = [t.index for t in doc.tokens if t.begin < e and t.end > b]
        if not hits:
            with pytest.raises(AlignmentError):
                align_span(doc, b, e)
        else:
            assert align_span(doc, b, e) == TokenSpan(min(hits), max(hits))


class TestNormalize:
    def test_shigellosis(self):
        assert normalize_terms("Shigellosis due to Shigella flexneri") == ("shigellosis", "shigella", "flexneri")

    def test_amebiasis_only_comma_removed(self):
        assert normalize_terms("Amebiasis, unspecified") == ("amebiasis", "unspecified")

    def test_snoring(self):
        assert normalize_terms("snoring") == ("snore",)

    def test_without_and_except_are_stopwords(self):
        assert normalize_terms("without except") == ()

    def test_numbers_kept(self):
        assert normalize_terms("type 2 diabetes") == ("type", "2", "diabetes")
        assert normalize_terms("type 2", NormConfig(keep_numbers=False)) == ("type",)

    def test_plurals(self):
        assert normalize_terms("effusions kidneys rashes arteries") == ("effusion", "kidney", "rash", "artery")

    def test_unique_first_occurrence(self):
        assert normalize_terms("HTN htn, Htn") == ("htn",)

    def test_case_sensitive_flag(self):
        cfg = NormConfig(lowercase=False)
        assert normalize_terms("HTN htn", cfg) == ("HTN", "htn")

    def test_overlap(self):
        assert term_overlap("snoring", "snoring") == 1.0
        assert term_overlap("HTN", "Essential (primary) hypertension") == 0.0
        assert term_overlap("anything", "the of") is None

    def test_table_targets_are_fixed_points(self):
        cfg = NormConfig(lemma_table={"foos": "bars"})
        assert cfg.lemmatize("bars") == "bars"

    @settings(max_examples=300)
    @given(st.text())
    def test_idempotent(self, text):
        once = normalize_terms(text)
        assert normalize_terms(" ".join(once)) == once

    @given(st.lists(st.sampled_from(["severe", "hypertension", "snoring", "effusions", "of", "the"])))
    def test_idempotent_on_clinical_words(self, words):
        once = normalize_terms(" ".join(words))
        assert normalize_terms(" ".join(once)) == once

    def test_load_config(self, tmp_path):
        (tmp_path / "stop.txt").write_text("# comment\nfoo bar\n")
        (tmp_path / "lemmas.json").write_text(json.dumps({"geese": "goose"}))
        (tmp_path / "norm.json").write_text(json.dumps(
            {"stopwords": "stop.txt", "lemma_table": "lemmas.json", "keep_numbers": False}))
        cfg = load_norm_config(tmp_path / "norm.json")
        assert normalize_terms("foo geese 12 the", cfg) == ("goose", "the")

    def test_default_config_cached(self):
        assert default_norm_config() is default_norm_config()
