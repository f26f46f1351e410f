import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from textpipe.model import canonical_json
from textpipe.nlp import analyze, extract, langdetect, pos, tokenizer


class TestExtractor:
    def test_utf8_passthrough(self):
        out = extract.extract("café".encode("utf-8"), None)
        assert out == {"text": "café", "mimetype": "text/plain"}

    def test_windows_1252_fallback(self):
        # byte E9 is U+00E9 in the windows-1252 table
        assert bytes([0xE9]).decode("cp1252") == "é"
        out = extract.extract(b"caf\xe9", None)
        assert out["text"] == "café"

    def test_html_reference_conversion(self):
        html = "<p>Hello <b>world</b></p><script>x()</script>"
        out = extract.extract(html.encode(), "text/html")
        assert out == {"text": "Hello world\n", "mimetype": "text/html"}

    def test_sniffing_without_declared_type(self):
        out = extract.extract(b"<!DOCTYPE html><p>Hi there</p>", None)
        assert out["mimetype"] == "text/html"
        assert out["text"] == "Hi there\n"

    def test_style_dropped_and_entities_decoded(self):
        html = "<style>p{color:red}</style><p>a &amp; b &lt;ok&gt;</p>"
        out = extract.extract(html.encode(), "text/html")
        assert out["text"] == "a & b <ok>\n"
        assert "color" not in out["text"]

    def test_block_boundaries_become_newlines(self):
        html = "<div>one</div><div>two<br>three</div>"
        out = extract.extract(html.encode(), "text/html")
        assert out["text"] == "one\ntwo\nthree\n"

    def test_crlf_normalized(self):
        out = extract.extract(b"a\r\nb", None)
        assert out["text"] == "a\nb"

    def test_no_tag_structure_in_html_output(self):
        html = b"<html><body><h1>T</h1><p>x < y is math</p></body></html>"
        out = extract.extract(html, None)
        assert "<p" not in out["text"] and "<h1" not in out["text"]

    def test_unmapped_cp1252_bytes_fall_back(self):
        out = extract.extract(b"a\x90b\xe9", None)
        assert out["text"] == "a\x90bé"


class TestTokenizer:
    def test_two_plain_sentences(self):
        tokens, sentences = tokenizer.tokenize("Dogs bark. Cats purr.")
        assert tokens == ["Dogs", "bark", ".", "Cats", "purr", "."]
        assert sentences == [(0, 3), (3, 6)]

    def test_abbreviation_suppression(self):
        tokens, sentences = tokenizer.tokenize("Dr. Smith left.")
        assert tokens == ["Dr", ".", "Smith", "left", "."]
        assert sentences == [(0, 5)]

    def test_dotted_abbreviation(self):
        _, sentences = tokenizer.tokenize("Use tools, e.g. Hammers work.")
        assert len(sentences) == 1

    def test_apostrophe_and_hyphen(self):
        tokens, _ = tokenizer.tokenize("it's state-of-the-art")
        assert tokens == ["it's", "state-of-the-art"]

    def test_edge_punctuation_split(self):
        tokens, _ = tokenizer.tokenize("'quoted' and -dash")
        assert tokens == ["'", "quoted", "'", "and", "-", "dash"]

    def test_terminator_run_splits_after_last(self):
        tokens, sentences = tokenizer.tokenize("Wait... What happened?")
        assert tokens == ["Wait", ".", ".", ".", "What", "happened", "?"]
        assert sentences == [(0, 4), (4, 7)]

    def test_no_split_before_lowercase(self):
        _, sentences = tokenizer.tokenize("see fig. 4 for details")
        assert len(sentences) == 1

    def test_trailing_unterminated_material(self):
        _, sentences = tokenizer.tokenize("Done. And then some")
        assert sentences == [(0, 2), (2, 5)]

    def test_spans_cover_and_do_not_overlap(self):
        tokens, sentences = tokenizer.tokenize(
            "One two. Three! Four? Five... unfinished"
        )
        previous_end = 0
        for start, end in sentences:
            assert start == previous_end
            assert end > start
            previous_end = end
        assert previous_end == len(tokens)

    @given(st.lists(st.sampled_from(["alpha", "beta", "Gamma", "delta"]),
                    min_size=1, max_size=30))
    def test_idempotent_on_flat_alphabetic_text(self, words):
        text = " ".join(words)
        tokens, _ = tokenizer.tokenize(text)
        assert tokens == words
        again, _ = tokenizer.tokenize(" ".join(tokens))
        assert again == tokens

    def test_empty_text(self):
        assert tokenizer.tokenize("") == ([], [])


class TestLanguageDetection:
    def test_english_sentence(self):
        text = "The quick brown fox jumps over the lazy dog and runs away."
        assert langdetect.detect(text) == "en"

    def test_portuguese_sentence(self):
        text = "O rato roeu a roupa do rei de Roma enquanto a rainha ria."
        assert langdetect.detect(text) == "pt"

    def test_numeric_is_und(self):
        assert langdetect.detect("12345 67890") == "und"

    def test_below_alpha_floor_is_und(self):
        assert langdetect.detect("ab cd") == "und"

    def test_profiles_reproducible_from_training_text(self):
        for lang in langdetect.LANGUAGES:
            rebuilt = langdetect.build_profile(langdetect.training_text(lang))
            bundled = langdetect.bundled_profiles()[lang]
            assert dict(rebuilt) == bundled
            assert len(rebuilt) == langdetect.PROFILE_SIZE

    def test_training_texts_are_large_enough(self):
        for lang in langdetect.LANGUAGES:
            assert len(langdetect.training_text(lang).split()) >= 2000


class TestFreqDist:
    def test_figure_semantics(self):
        assert analyze.freq_dist(["The", "the", "cat"]) == [["the", 2], ["cat", 1]]

    def test_empty(self):
        assert analyze.freq_dist([]) == []

    def test_tie_break_lexicographic(self):
        assert analyze.freq_dist(["b", "a"]) == [["a", 1], ["b", 1]]

    @given(st.lists(st.sampled_from(["a", "B", "cc", "Dd"]), max_size=60))
    def test_conservation_and_strict_order(self, tokens):
        dist = analyze.freq_dist(tokens)
        assert sum(count for _, count in dist) == len(tokens)
        keys = [(-count, token) for token, count in dist]
        assert keys == sorted(keys)


class TestNgrams:
    def test_direct_enumeration(self):
        out = analyze.ngram_counts(["a", "b", "a", "b"], [2])
        assert out["2"] == [[["a", "b"], 2], [["b", "a"], 1]]

    def test_window_longer_than_sequence(self):
        assert analyze.ngram_counts(["a", "b", "c"], [5])["5"] == []

    def test_invalid_n(self):
        with pytest.raises(analyze.InvalidN):
            analyze.ngram_counts(["a"], [0])
        with pytest.raises(analyze.InvalidN):
            analyze.ngram_counts(["a"], [11])

    def test_lowercases(self):
        out = analyze.ngram_counts(["The", "the"], [1])
        assert out["1"] == [[["the"], 2]]

    def test_matches_naive_oracle_on_random_sequences(self):
        rng = random.Random(11)
        vocab = ["x", "y", "z", "W"]
        for _ in range(20):
            tokens = [rng.choice(vocab) for _ in range(200)]
            out = analyze.ngram_counts(tokens, [1, 2, 3])
            lowered = [t.lower() for t in tokens]
            for n in (1, 2, 3):
                naive = Counter(
                    tuple(lowered[i : i + n])
                    for i in range(len(lowered) - n + 1)
                )
                got = {tuple(gram): count for gram, count in out[str(n)]}
                assert got == dict(naive)


class TestStatistics:
    def test_direct_computation(self):
        tokens = ["Dogs", "bark", ".", "Dogs", "bark", "."]
        out = analyze.statistics(tokens, [(0, 3), (3, 6)])
        assert out["word_repertoire"] == 2
        assert out["sentence_repertoire"] == 1
        assert out["average_sentence_length_tokens"] == 3.0
        assert out["token_count"] == 6
        assert out["sentence_count"] == 2
        assert out["type_token_ratio"] == 0.5

    def test_empty_document(self):
        out = analyze.statistics([], [])
        assert out == {
            "word_repertoire": 0,
            "sentence_repertoire": 0,
            "type_token_ratio": 0.0,
            "average_sentence_length_tokens": 0.0,
            "token_count": 0,
            "sentence_count": 0,
        }

    def test_alphabetic_token_rule(self):
        assert analyze.is_alphabetic_token("it's")
        assert analyze.is_alphabetic_token("state-of-the-art")
        assert not analyze.is_alphabetic_token("123")
        assert not analyze.is_alphabetic_token("a1")
        assert not analyze.is_alphabetic_token("-a")
        assert not analyze.is_alphabetic_token("")


class TestPosTagger:
    def test_cascade_example(self):
        tags = [t for _, t in pos.tag_tokens(
            ["the", "dogs", "run", "quickly", "."], "en")]
        assert tags == ["DET", "NOUN", "VERB", "ADV", "PUNCT"]

    def test_portuguese_mente(self):
        assert pos.tag_tokens(["rapidamente"], "pt") == [["rapidamente", "ADV"]]

    def test_default_noun(self):
        assert pos.tag_tokens(["xyzzy"], "en") == [["xyzzy", "NOUN"]]

    def test_numbers(self):
        assert pos.tag_token("3,14", "en") == "NUM"
        assert pos.tag_token("2024", "pt") == "NUM"
        assert pos.tag_token("10/12", "en") == "NUM"

    def test_unknown_language_everything_x_except_punct(self):
        out = pos.tag_tokens(["word", "123", "."], "und")
        assert out == [["word", "X"], ["123", "X"], [".", "PUNCT"]]

    def test_alignment_property(self):
        tokens = ["A", "very", "long-ish", "sentence", ",", "truly", "."]
        out = pos.tag_tokens(tokens, "en")
        assert [token for token, _ in out] == tokens
        assert all(tag in pos.TAGS for _, tag in out)

    def test_suffix_rules_en(self):
        assert pos.tag_token("happily", "en") == "ADV"
        assert pos.tag_token("jumping", "en") == "VERB"
        assert pos.tag_token("painted", "en") == "VERB"
        assert pos.tag_token("famous", "en") == "ADJ"
        assert pos.tag_token("creation", "en") == "NOUN"

    def test_suffix_rules_pt(self):
        assert pos.tag_token("cantar", "pt") == "VERB"
        assert pos.tag_token("felicidade", "pt") == "NOUN"
        assert pos.tag_token("famoso", "pt") == "ADJ"
        assert pos.tag_token("confortável", "pt") == "ADJ"

    def test_short_tokens_skip_suffix_rules(self):
        assert pos.tag_token("bed", "en") == "NOUN"

    def test_lexicons_are_large_enough(self):
        assert len(pos.lexicon("en")) >= 500
        assert len(pos.lexicon("pt")) >= 500
        for lex in (pos.lexicon("en"), pos.lexicon("pt")):
            assert set(lex.values()) <= set(pos.TAGS)


class TestDeterminism:
    def test_workers_byte_identical_across_calls(self):
        from textpipe.nlp import BUILTIN_WORKERS
        from textpipe.worker import WorkerInput, invoke

        text = "Dr. Smith's dogs bark loudly. O rato roeu a roupa. 123!"
        raw = text.encode()
        inputs = {
            "extractor": WorkerInput("d", {}, raw=raw),
            "langdetect": WorkerInput("d", {"text": text}),
            "tokenizer": WorkerInput("d", {"text": text}),
        }
        tokens, sentences = tokenizer.tokenize(text)
        spans = [[a, b] for a, b in sentences]
        inputs.update(
            {
                "freqdist": WorkerInput(
                    "d", {"tokens": tokens, "language": "en"}),
                "ngrams": WorkerInput("d", {"tokens": tokens}),
                "pos": WorkerInput("d", {"tokens": tokens, "language": "en"}),
                "statistics": WorkerInput(
                    "d", {"tokens": tokens, "sentences": spans}),
                "indexer": WorkerInput("d", {"tokens": tokens}),
            }
        )
        for descriptor, process in BUILTIN_WORKERS:
            work = inputs[descriptor.name]
            first = invoke(descriptor, process, work)
            second = invoke(descriptor, process, work)
            a = canonical_json({r.key: r.value for r in first})
            b = canonical_json({r.key: r.value for r in second})
            assert a == b, descriptor.name
