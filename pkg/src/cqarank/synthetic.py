"""Synthetic question/answer threads with a controllable acceptance signal.

The real extraction is not redistributable, so tests and demos run on
generated threads. ``signal`` chooses what reveals the accepted answer:

``"marker"``
    the accepted answer contains :data:`MARKER`, no other answer does;
``"score"``
    the accepted answer has the strictly highest ``a_score``;
``"mixed"``
    metadata is informative but noisy and the marker is only a weak cue;
``"none"``
    nothing is informative.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .corpus import AnswerRecord

__all__ = ["MARKER", "vocabulary", "make_records", "make_embeddings"]

MARKER = "solved"
_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su", "do", "gra")


def vocabulary(size: int = 300) -> list[str]:
    """Deterministic pseudo-words (two or three syllables), never equal to the marker."""
    words = []
    i = 0
    n = len(_SYLLABLES)
    while len(words) < size:
        a, b, c = i % n, (i // n) % n, (i // (n * n)) % (n + 1)
        word = _SYLLABLES[a] + _SYLLABLES[b] + ("" if c == n else _SYLLABLES[c])
        if word != MARKER and word not in words:
            words.append(word)
        i += 1
    return words


def _sentence(rng, words, n_min=3, n_max=10, marker_at=None):
    n = int(rng.integers(n_min, n_max + 1))
    toks = [words[j] for j in rng.integers(0, len(words), n)]
    if marker_at is not None:
        toks.insert(min(marker_at, len(toks)), MARKER)
    toks[0] = toks[0].capitalize()
    return " ".join(toks) + rng.choice([".", ".", ".", "?", "!"])


def _body(rng, words, n_sent, with_marker=False, link=False):
    marker_sentence = int(rng.integers(0, n_sent)) if with_marker else -1
    sentences = []
    for s in range(n_sent):
        at = int(rng.integers(0, 8)) if s == marker_sentence else None
        sentences.append(_sentence(rng, words, marker_at=at))
    html = "".join(f"<p>{s}</p>" for s in sentences)
    if link:
        html += '<p>See <a href="https://example.org/doc">the docs</a></p>'
    return html


def make_records(
    n_threads: int,
    signal: str = "marker",
    answers_per_thread: tuple[int, int] = (2, 5),
    sentences_per_answer: tuple[int, int] = (1, 2),
    seed: int = 0,
    year: int = 2016,
    first_q_id: int = 1,
    first_a_id: Optional[int] = None,
    vocab_size: int = 300,
) -> list[AnswerRecord]:
    """Generate ``n_threads`` threads, each with exactly one accepted answer."""
    if signal not in ("marker", "score", "mixed", "none"):
        raise ValueError(f"unknown signal {signal!r}")
    rng = np.random.default_rng(seed)
    words = vocabulary(vocab_size)
    a_id = first_a_id if first_a_id is not None else first_q_id * 1000 + 1
    records = []
    for t in range(n_threads):
        q_id = first_q_id + t
        n_ans = int(rng.integers(answers_per_thread[0], answers_per_thread[1] + 1))
        accepted_pos = int(rng.integers(0, n_ans))
        title = _sentence(rng, words, 4, 8).rstrip(".?!")
        q_body = _body(rng, words, int(rng.integers(1, 4)))
        ids = list(range(a_id, a_id + n_ans))
        a_id += n_ans
        scores = rng.integers(0, 6, n_ans)
        if signal == "score":
            scores[accepted_pos] = scores.max() + int(rng.integers(1, 5))
        for pos in range(n_ans):
            accepted = pos == accepted_pos
            if signal == "marker":
                with_marker = accepted
            elif signal == "mixed":
                with_marker = rng.random() < (0.35 if accepted else 0.15)
            else:
                with_marker = False
            informative = signal == "mixed"
            lift = 1.0 if (informative and accepted) else 0.0
            score = int(scores[pos])
            if informative:
                score = int(max(0, rng.poisson(2.0 + 3.0 * lift)))
            n_sent = int(rng.integers(sentences_per_answer[0], sentences_per_answer[1] + 1))
            records.append(
                AnswerRecord(
                    q_id=q_id,
                    q_title=title,
                    q_body=q_body,
                    q_answer_count=n_ans,
                    q_accepted_a=ids[accepted_pos],
                    a_id=ids[pos],
                    a_body=_body(rng, words, n_sent, with_marker, link=rng.random() < 0.2 + 0.3 * lift),
                    a_score=score,
                    a_comment_count=int(rng.poisson(1.0 + 1.5 * lift)),
                    user_id=int(rng.integers(1, 5000)),
                    user_reputation=int(rng.integers(1, 20000) * (1 + lift)),
                    user_up_votes=int(rng.integers(0, 500)),
                    user_down_votes=int(rng.integers(0, 50)),
                    user_views=int(rng.integers(0, 3000)),
                    a_accepted=accepted,
                    q_creation_year=year,
                    user_about="About me" if rng.random() < 0.5 - 0.2 * lift else None,
                    user_location="Somewhere" if rng.random() < 0.5 - 0.2 * lift else None,
                    user_profile_image_url="https://img.example/u.png" if rng.random() < 0.7 else None,
                    user_website_url="https://u.example" if rng.random() < 0.3 else None,
                )
            )
    return records


def make_embeddings(
    dimension: int = 100,
    seed: int = 0,
    coverage: float = 0.9,
    vocab_size: int = 300,
    scale: float = 0.4,
) -> dict[str, np.ndarray]:
    """Random vectors for ``coverage`` of the vocabulary, the marker always included."""
    rng = np.random.default_rng(seed)
    words = vocabulary(vocab_size)
    kept = [w for w in words if rng.random() < coverage]
    mapping = {w: rng.normal(0.0, scale, dimension) for w in kept}
    mapping[MARKER] = rng.normal(0.0, scale, dimension)
    for w in ("see", "the", "docs"):
        mapping[w] = rng.normal(0.0, scale, dimension)
    return mapping
