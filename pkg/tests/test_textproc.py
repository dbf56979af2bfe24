import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqarank.textproc import (
    common_word_count,
    has_urls,
    split_sentences,
    strip_html,
    text_stats,
    tokenize,
)

html_soup = st.lists(
    st.sampled_from(["<p>", "</p>", "<b>", "</b>", "<br/>", "<li>", "&amp;", "&lt;", "&gt;", "&nbsp;",
                     "&#38;", " ", "\n", "x", "Yes.", "<", ">", "List<String>", "&amp;lt;", "<pre><code>"]),
    max_size=30,
).map("".join)


class TestStripHtml:
    @pytest.mark.parametrize(
        "raw, expected",
        [
            ("<p>Hi <b>there</b></p>", "Hi there"),
            ("a &amp; b", "a & b"),
            ("", ""),
            ("<p>one</p><p>two</p>", "one\ntwo"),
            ("x&nbsp;&nbsp;y", "x y"),
            ("&quot;q&quot; &#39;s&#39; &#x41;", "\"q\" 's' A"),
        ],
    )
    def test_examples(self, raw, expected):
        assert strip_html(raw) == expected

    def test_decoded_code_survives(self):
        assert strip_html("<code>List&lt;String&gt; xs</code>") == "List<String> xs"

    def test_attributes_dropped(self):
        assert strip_html('<a href="https://x.org" title="t">link</a>') == "link"

    @settings(max_examples=300, deadline=None)
    @given(html_soup)
    def test_idempotent(self, raw):
        once = strip_html(raw)
        assert strip_html(once) == once

    @settings(max_examples=100, deadline=None)
    @given(st.text(max_size=60))
    def test_idempotent_on_any_text(self, raw):
        once = strip_html(raw)
        assert strip_html(once) == once


class TestTokenize:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("Hello, World!", ["hello", "world"]),
            ("don't stop", ["don't", "stop"]),
            ("...", []),
            ("snake_case (call)", ["snake_case", "call"]),
            ("", []),
        ],
    )
    def test_examples(self, text, expected):
        assert tokenize(text) == expected

    @settings(max_examples=200, deadline=None)
    @given(st.text(max_size=80))
    def test_lowercase_nonempty(self, text):
        for tok in tokenize(text):
            assert tok and tok == tok.lower()


class TestSentences:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("A b. C d! E?", ["A b.", "C d!", "E?"]),
            ("no terminator", ["no terminator"]),
            ("line1\nline2", ["line1", "line2"]),
            ("v1.2 is out", ["v1.2 is out"]),
            ("", []),
        ],
    )
    def test_examples(self, text, expected):
        assert split_sentences(text) == expected


class TestStats:
    def test_worked_example(self):
        s = text_stats("ab cde. f.")
        assert (s.n_words, s.n_sent, s.max_n_word_sent) == (3, 2, 2)
        assert s.avg_word_len == pytest.approx(2.0)
        assert s.avg_n_word_sent == pytest.approx(1.5)

    def test_empty(self):
        s = text_stats("")
        assert (s.n_words, s.avg_word_len, s.n_sent, s.avg_n_word_sent, s.max_n_word_sent) == (0, 0, 0, 0, 0)

    def test_single_word(self):
        s = text_stats("word")
        assert (s.n_words, s.n_sent, s.avg_n_word_sent, s.max_n_word_sent) == (1, 1, 1, 1)

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet="ab .!?\n,", max_size=60))
    def test_words_add_up_over_sentences(self, text):
        s = text_stats(text)
        assert s.n_words == sum(len(tokenize(p)) for p in split_sentences(text))
        if s.n_sent:
            assert s.max_n_word_sent >= s.avg_n_word_sent
        if s.n_words:
            assert s.avg_word_len > 0


class TestOverlapAndUrls:
    def test_common_words(self):
        assert common_word_count(["how", "to", "sort", "list"], ["sort", "the", "list"]) == 2
        assert common_word_count(["a"], ["b"]) == 0
        five = ["a", "b", "c", "d", "e"]
        assert common_word_count(five, five + five) == 5

    @pytest.mark.parametrize(
        "raw, expected",
        [('<a href="https://x.y">z</a>', True), ("plain text", False), ("HTTPS://CAPS", True), ("http://a", True)],
    )
    def test_urls(self, raw, expected):
        assert has_urls(raw) is expected
