"""Text representations: TF-IDF bag of words and embedding-id sequences."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .textproc import split_sentences, tokenize

__all__ = [
    "PAD",
    "UNK",
    "TfidfModel",
    "EmbeddingTable",
    "EmbeddingFormatError",
    "TokenSequence",
    "OovReport",
    "fit_tfidf",
    "tfidf_transform",
    "tfidf_matrix",
    "load_embeddings",
    "write_embeddings",
    "summarize_sentences",
    "encode_sequence",
    "oov_report",
]

PAD = 0
UNK = 1


@dataclass(frozen=True)
class TfidfModel:
    vocabulary: dict[str, int]
    document_frequency: dict[str, int]
    corpus_size: int

    def idf(self, token: str) -> float:
        return math.log((1 + self.corpus_size) / (1 + self.document_frequency[token])) + 1.0

    def to_dict(self) -> dict:
        ordered = sorted(self.vocabulary, key=self.vocabulary.__getitem__)
        return {
            "corpus_size": self.corpus_size,
            "tokens": ordered,
            "document_frequency": [self.document_frequency[t] for t in ordered],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "TfidfModel":
        tokens = list(data["tokens"])
        return cls(
            vocabulary={t: i for i, t in enumerate(tokens)},
            document_frequency=dict(zip(tokens, data["document_frequency"])),
            corpus_size=int(data["corpus_size"]),
        )


def fit_tfidf(
    documents: Sequence[Sequence[str]], max_vocab: Optional[int] = None, min_df: int = 2
) -> TfidfModel:
    """Fit vocabulary and document frequencies.

    Tokens need ``min_df`` documents to be kept; the survivors are cut to the
    ``max_vocab`` highest document frequencies, ties broken lexicographically.
    Column indices follow that ranking.
    """
    if not documents:
        raise ValueError("empty corpus")
    df = Counter()
    for doc in documents:
        df.update(set(doc))
    kept = sorted((t for t, n in df.items() if n >= min_df), key=lambda t: (-df[t], t))
    if max_vocab is not None:
        kept = kept[:max_vocab]
    return TfidfModel(
        vocabulary={t: i for i, t in enumerate(kept)},
        document_frequency={t: df[t] for t in kept},
        corpus_size=len(documents),
    )


def tfidf_transform(model: TfidfModel, tokens: Sequence[str]) -> dict[int, float]:
    """Sparse L2-normalized weights ``{column: weight}``; empty when no token is known."""
    counts = Counter(t for t in tokens if t in model.vocabulary)
    weights = {model.vocabulary[t]: n * model.idf(t) for t, n in counts.items()}
    norm = math.sqrt(sum(w * w for w in weights.values()))
    if norm == 0.0:
        return {}
    return {j: w / norm for j, w in sorted(weights.items())}


def tfidf_matrix(model: TfidfModel, documents: Iterable[Sequence[str]]) -> np.ndarray:
    """Dense ``(n_docs, |vocabulary|)`` matrix of :func:`tfidf_transform` rows."""
    rows = [tfidf_transform(model, doc) for doc in documents]
    out = np.zeros((len(rows), len(model.vocabulary)))
    for i, row in enumerate(rows):
        if row:
            out[i, list(row)] = list(row.values())
    return out


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass
class EmbeddingTable:
    """Frozen word vectors; row 0 is padding and row 1 the unknown token, both zero."""

    dimension: int
    index: dict[str, int]
    vectors: np.ndarray
    duplicates: int = 0

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Sequence[float]], dimension: int) -> "EmbeddingTable":
        vectors = np.zeros((len(mapping) + 2, dimension))
        index = {}
        for i, (word, vec) in enumerate(mapping.items(), start=2):
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (dimension,):
                raise ValueError(f"vector for {word!r} has shape {vec.shape}, expected ({dimension},)")
            index[word] = i
            vectors[i] = vec
        return cls(dimension, index, vectors)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK)

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.id(word)]


def load_embeddings(path, expected_dimension: int) -> EmbeddingTable:
    """Read a GloVe-style text file: ``word f1 ... fD`` per line.

    A repeated word keeps its last vector; the number of repeats is recorded
    in ``EmbeddingTable.duplicates``.
    """
    mapping: dict[str, np.ndarray] = {}
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.rstrip(" ").split(" ")
            word, values = parts[0], parts[1:]
            if len(values) != expected_dimension:
                raise EmbeddingFormatError(
                    f"expected {expected_dimension} floats, found {len(values)}", lineno
                )
            try:
                vec = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingFormatError("non-numeric vector component", lineno) from None
            if word in mapping:
                duplicates += 1
                del mapping[word]
            mapping[word] = vec
    table = EmbeddingTable.from_mapping(mapping, expected_dimension)
    table.duplicates = duplicates
    return table


def write_embeddings(path, mapping: Mapping[str, Sequence[float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word, vec in mapping.items():
            fh.write(word + " " + " ".join(repr(float(v)) for v in vec) + "\n")


def summarize_sentences(text: str, max_sentences: int) -> str:
    """Keep the ``max_sentences`` longest sentences, in document order.

    Length is counted in tokens and ties go to the earlier sentence. ``-1``
    returns the text untouched.
    """
    if max_sentences == -1:
        return text
    if max_sentences < 1:
        raise ValueError("max_sentences must be -1 or >= 1")
    sentences = split_sentences(text)
    if len(sentences) <= max_sentences:
        return text
    ranked = sorted(range(len(sentences)), key=lambda i: (-len(tokenize(sentences[i])), i))
    keep = sorted(ranked[:max_sentences])
    return " ".join(sentences[i] for i in keep)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    valid_length: int
    oov_positions: int

    @property
    def max_len(self) -> int:
        return len(self.ids)


def encode_sequence(text: str, table: EmbeddingTable, max_len: int) -> TokenSequence:
    """Token ids truncated to ``max_len`` and right-padded with :data:`PAD`.

    ``oov_positions`` counts unknown tokens among the kept positions.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    kept = [table.id(t) for t in tokenize(text)[:max_len]]
    ids = np.full(max_len, PAD, dtype=np.int64)
    ids[: len(kept)] = kept
    return TokenSequence(ids=ids, valid_length=len(kept), oov_positions=kept.count(UNK))


@dataclass(frozen=True)
class OovReport:
    converted: int
    misses: int
    miss_examples: list[str] = field(default_factory=list)

    def __str__(self) -> str:
        return f"Converted {self.converted} words ({self.misses} misses)"


def oov_report(texts: Iterable[str], table: EmbeddingTable, n_examples: int = 20) -> OovReport:
    """Count distinct token types found / missing in the embedding table."""
    types = set()
    for text in texts:
        types.update(tokenize(text))
    missing = sorted(t for t in types if t not in table)
    return OovReport(
        converted=len(types) - len(missing),
        misses=len(missing),
        miss_examples=missing[:n_examples],
    )
