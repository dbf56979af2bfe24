"""HTML stripping, tokenization, sentence segmentation and text statistics.

Every function here is pure. Bodies coming out of the Stack Overflow dump are
HTML; run :func:`strip_html` first, then tokenize or segment the plain text.
:func:`has_urls` is the exception and must see the raw HTML, since links live
in ``href`` attributes that stripping removes.
"""

from __future__ import annotations

import re
import string
import unicodedata
from dataclasses import dataclass

__all__ = [
    "TextStats",
    "strip_html",
    "tokenize",
    "split_sentences",
    "text_stats",
    "common_word_count",
    "has_urls",
]

# Tag names that occur in Stack Overflow post bodies. Restricting the scanner
# to real HTML names keeps decoded code such as ``List<String>`` intact.
_HTML_TAGS = (
    "a abbr address article aside b blockquote body br caption center cite code col "
    "colgroup dd del details dfn div dl dt em figcaption figure font footer h1 h2 h3 "
    "h4 h5 h6 head header hr html i iframe img ins kbd label li link meta nav ol p pre "
    "q s samp script section small span strike strong style sub summary sup table "
    "tbody td tfoot th thead title tr tt u ul var"
).split()
_BLOCK_TAGS = frozenset(
    "address article aside blockquote body br dd details div dl dt figcaption figure "
    "footer h1 h2 h3 h4 h5 h6 header hr html li nav ol p pre section table tbody td "
    "tfoot th thead tr ul".split()
)

_TAG_RE = re.compile(
    r"<!--.*?-->|<\s*(/?)\s*(" + "|".join(_HTML_TAGS) + r")\b[^<>]*>",
    re.IGNORECASE | re.DOTALL,
)
_ENTITY_RE = re.compile(r"&(amp|lt|gt|quot|apos|nbsp|#\d{1,7}|#[xX][0-9a-fA-F]{1,6});")
_NAMED_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "apos": "'", "nbsp": " "}
_INLINE_WS_RE = re.compile(r"[^\S\n]+")

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+|\n")
_URL_RE = re.compile(r"https?://", re.IGNORECASE)

_ASCII_PUNCT = frozenset(string.punctuation)


@dataclass(frozen=True)
class TextStats:
    n_words: int
    avg_word_len: float
    n_sent: int
    avg_n_word_sent: float
    max_n_word_sent: int


def _decode_entity(match: re.Match) -> str:
    name = match.group(1)
    if name in _NAMED_ENTITIES:
        return _NAMED_ENTITIES[name]
    try:
        code = int(name[2:], 16) if name[1] in "xX" else int(name[1:])
        return chr(code)
    except (ValueError, OverflowError):
        return match.group(0)


def _replace_tag(match: re.Match) -> str:
    name = match.group(2)
    if name is not None and name.lower() in _BLOCK_TAGS:
        return "\n"
    return ""


def _strip_once(text: str) -> str:
    text = _TAG_RE.sub(_replace_tag, text)
    text = _ENTITY_RE.sub(_decode_entity, text)
    text = text.replace("\r\n", "\n").replace("\r", "\n").replace("\xa0", " ")
    lines = (_INLINE_WS_RE.sub(" ", line).strip() for line in text.split("\n"))
    return "\n".join(line for line in lines if line)


def strip_html(raw: str) -> str:
    """Remove tags and decode the common entities of an HTML body.

    Block-level tags become line breaks, runs of inline whitespace collapse to
    a single space and blank lines are dropped. The pass is repeated until the
    text stops changing, so ``&amp;lt;p&amp;gt;`` ends up fully stripped and
    the function is idempotent.
    """
    text = raw
    while True:
        stripped = _strip_once(text)
        if stripped == text:
            return stripped
        text = stripped


def _is_punct(ch: str) -> bool:
    return ch in _ASCII_PUNCT or unicodedata.category(ch)[0] in "PS"


def tokenize(text: str) -> list[str]:
    """Lowercase whitespace tokens with leading/trailing punctuation trimmed.

    >>> tokenize("Hello, World! don't")
    ['hello', 'world', "don't"]
    """
    tokens = []
    for piece in text.split():
        start, end = 0, len(piece)
        while start < end and _is_punct(piece[start]):
            start += 1
        while end > start and _is_punct(piece[end - 1]):
            end -= 1
        if start < end:
            tokens.append(piece[start:end].lower())
    return tokens


def split_sentences(text: str) -> list[str]:
    """Split at newlines and at ``.``/``!``/``?`` followed by whitespace."""
    parts = (part.strip() for part in _SENTENCE_SPLIT_RE.split(text))
    return [part for part in parts if part]


def text_stats(text: str) -> TextStats:
    sentences = split_sentences(text)
    per_sentence = [len(tokenize(s)) for s in sentences]
    tokens = tokenize(text)
    n_words = len(tokens)
    if not sentences:
        return TextStats(0, 0.0, 0, 0.0, 0)
    avg_word_len = sum(len(t) for t in tokens) / n_words if n_words else 0.0
    return TextStats(
        n_words=n_words,
        avg_word_len=avg_word_len,
        n_sent=len(sentences),
        avg_n_word_sent=n_words / len(sentences),
        max_n_word_sent=max(per_sentence),
    )


def common_word_count(q_tokens: list[str], a_tokens: list[str]) -> int:
    """Number of distinct tokens shared by question and answer."""
    return len(set(q_tokens) & set(a_tokens))


def has_urls(raw: str) -> bool:
    return _URL_RE.search(raw) is not None
