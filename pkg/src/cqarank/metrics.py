"""Tie-aware ranking metrics for one-accepted-answer queries.

Reciprocal rank treats ties pessimistically: the accepted answer is placed
after every answer that shares its score. NDCG instead averages over all
orderings of tied answers, which has a closed form because the discount of a
tied group only depends on the block of ranks the group occupies. Together
these reproduce the textbook example ``gold={0,0,1}``, ``scores={0,1,0}``
giving ``RR=1/3`` and ``NDCG=(1/log2(3) + 1/log2(4))/2``.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "RankingQuery",
    "MetricReport",
    "reciprocal_rank",
    "mean_reciprocal_rank",
    "dcg_at_k",
    "ndcg_at_k",
    "ndcg_permutation_oracle",
    "expected_random_rr",
    "mrr_vs_answer_count",
    "mrr_histogram",
    "evaluate_queries",
    "read_run_csv",
    "write_run_csv",
]


@dataclass(frozen=True)
class RankingQuery:
    gold: np.ndarray
    scores: np.ndarray
    q_id: int = 0
    a_ids: tuple = ()

    def __post_init__(self):
        gold = np.asarray(self.gold, dtype=np.float64)
        scores = np.asarray(self.scores, dtype=np.float64)
        if gold.ndim != 1 or gold.shape != scores.shape or gold.size == 0:
            raise ValueError("gold and scores must be non-empty 1-D vectors of equal length")
        if not np.all((gold == 0) | (gold == 1)) or gold.sum() != 1:
            raise ValueError("gold must contain exactly one 1 and zeros elsewhere")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        object.__setattr__(self, "gold", gold)
        object.__setattr__(self, "scores", scores)

    @property
    def n_answers(self) -> int:
        return self.gold.size

    @property
    def accepted_index(self) -> int:
        return int(np.argmax(self.gold))


@dataclass(frozen=True)
class MetricReport:
    ndcg_at_1: float
    ndcg_at_3: float
    ndcg_at_5: float
    mrr: float
    n_queries: int


def reciprocal_rank(query: RankingQuery) -> float:
    s = query.scores
    target = s[query.accepted_index]
    rank = int(np.sum(s > target)) + int(np.sum(s == target))
    return 1.0 / rank


def mean_reciprocal_rank(queries: Iterable[RankingQuery]) -> float:
    total, n = 0.0, 0
    for q in queries:
        total += reciprocal_rank(q)
        n += 1
    if n == 0:
        raise ValueError("no queries")
    return total / n


def _discount(rank: int) -> float:
    return 1.0 / math.log2(rank + 1)


def dcg_at_k(query: RankingQuery, k: int) -> float:
    """Expected DCG@k over uniformly random orderings of tied scores."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(-query.scores, kind="stable")
    sorted_scores = query.scores[order]
    sorted_gold = query.gold[order]
    n = len(order)
    dcg, start = 0.0, 0
    while start < n and start < k:
        stop = start + 1
        while stop < n and sorted_scores[stop] == sorted_scores[start]:
            stop += 1
        # ranks start+1 .. stop (1-based), truncated at k
        block = sum(_discount(r) for r in range(start + 1, min(stop, k) + 1))
        dcg += float(sorted_gold[start:stop].sum()) * block / (stop - start)
        start = stop
    return dcg


def _ideal_dcg(gold: np.ndarray, k: int) -> float:
    ideal = np.sort(gold)[::-1][:k]
    return sum(g * _discount(i) for i, g in enumerate(ideal, start=1))


def ndcg_at_k(query: RankingQuery, k: int) -> float:
    return dcg_at_k(query, k) / _ideal_dcg(query.gold, k)


def ndcg_permutation_oracle(query: RankingQuery, k: int, max_answers: int = 9) -> float:
    """Mean NDCG@k over every total order consistent with the scores.

    Enumerates permutations within each tie group explicitly; only meant as a
    brute-force check of :func:`ndcg_at_k`.
    """
    if query.n_answers > max_answers:
        raise ValueError(f"oracle bound exceeded: {query.n_answers} > {max_answers} answers")
    groups = defaultdict(list)
    for i, s in enumerate(query.scores):
        groups[s].append(i)
    ordered_groups = [groups[s] for s in sorted(groups, reverse=True)]
    ideal = _ideal_dcg(query.gold, k)
    total, count = 0.0, 0
    for combo in itertools.product(*(itertools.permutations(g) for g in ordered_groups)):
        ranking = [i for group in combo for i in group]
        dcg = sum(query.gold[i] * _discount(r) for r, i in enumerate(ranking[:k], start=1))
        total += dcg / ideal
        count += 1
    return total / count


def expected_random_rr(n: int) -> float:
    """Expected reciprocal rank of the accepted answer under a uniform random ranking."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return sum(1.0 / r for r in range(1, n + 1)) / n


def mrr_vs_answer_count(queries: Sequence[RankingQuery]) -> list[tuple[int, float, int]]:
    """Rows ``(n_answers, mean RR, n_queries)`` in ascending answer count."""
    if not queries:
        raise ValueError("no queries")
    groups: dict[int, list[float]] = defaultdict(list)
    for q in queries:
        groups[q.n_answers].append(reciprocal_rank(q))
    return [(n, sum(groups[n]) / len(groups[n]), len(groups[n])) for n in sorted(groups)]


def mrr_histogram(queries: Sequence[RankingQuery], bin_count: int = 10) -> list[tuple[float, int]]:
    """Counts of RR values over ``bin_count`` equal bins of [0, 1]; 1.0 falls in the last bin."""
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    if not queries:
        raise ValueError("no queries")
    counts = [0] * bin_count
    for q in queries:
        counts[min(int(reciprocal_rank(q) * bin_count), bin_count - 1)] += 1
    return [(i / bin_count, c) for i, c in enumerate(counts)]


def evaluate_queries(queries: Sequence[RankingQuery]) -> MetricReport:
    if not queries:
        raise ValueError("no queries")
    n = len(queries)
    ndcg = {k: float(sum(ndcg_at_k(q, k) for q in queries) / n) for k in (1, 3, 5)}
    return MetricReport(ndcg[1], ndcg[3], ndcg[5], mean_reciprocal_rank(queries), n)


def write_run_csv(queries: Iterable[RankingQuery]) -> str:
    """Scoring-run exchange format: ``q_id,a_id,gold,score`` per answer."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("q_id", "a_id", "gold", "score"))
    for q in queries:
        a_ids = q.a_ids or tuple(range(1, q.n_answers + 1))
        for a_id, g, s in zip(a_ids, q.gold, q.scores):
            writer.writerow((q.q_id, a_id, int(g), repr(float(s))))
    return buf.getvalue()


def read_run_csv(text: str) -> list[RankingQuery]:
    """Parse a scoring run; rows are grouped by ``q_id`` in first-seen order."""
    reader = csv.DictReader(io.StringIO(text))
    missing = {"q_id", "a_id", "gold", "score"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"run file lacks columns: {sorted(missing)}")
    rows: dict[int, list[tuple[int, float, float]]] = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            q_id = int(row["q_id"])
            entry = (int(row["a_id"]), float(row["gold"]), float(row["score"]))
        except (TypeError, ValueError):
            raise ValueError(f"line {lineno}: malformed run row") from None
        rows.setdefault(q_id, []).append(entry)
    queries = []
    for q_id, entries in rows.items():
        a_ids, gold, scores = zip(*entries)
        queries.append(RankingQuery(np.array(gold), np.array(scores), q_id=q_id, a_ids=a_ids))
    return queries
