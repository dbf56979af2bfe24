import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqarank.metrics import (
    RankingQuery,
    evaluate_queries,
    expected_random_rr,
    mean_reciprocal_rank,
    mrr_histogram,
    mrr_vs_answer_count,
    ndcg_at_k,
    ndcg_permutation_oracle,
    read_run_csv,
    reciprocal_rank,
    write_run_csv,
)


def q(gold, scores, **kw):
    return RankingQuery(np.array(gold, float), np.array(scores, float), **kw)


@st.composite
def queries(draw, max_n=7):
    n = draw(st.integers(1, max_n))
    levels = draw(st.integers(1, n))
    scores = draw(st.lists(st.integers(0, levels - 1), min_size=n, max_size=n))
    accepted = draw(st.integers(0, n - 1))
    gold = [0.0] * n
    gold[accepted] = 1.0
    return q(gold, [float(s) for s in scores])


class TestRankingQuery:
    def test_rejects_two_accepted(self):
        with pytest.raises(ValueError):
            q([1, 1, 0], [0, 1, 2])

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            q([1, 0], [0.5])

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            q([1, 0], [np.nan, 0])


class TestReciprocalRank:
    def test_worked_examples(self):
        assert reciprocal_rank(q([0, 0, 1], [0, 0, 1])) == 1.0
        assert reciprocal_rank(q([0, 0, 1], [0, 1, 0])) == pytest.approx(1 / 3)

    def test_all_tied_is_pessimistic(self):
        assert reciprocal_rank(q([1, 0, 0], [5, 5, 5])) == pytest.approx(1 / 3)

    def test_mean(self):
        assert mean_reciprocal_rank([q([1, 0], [1, 0]), q([1, 0], [0, 1])]) == 0.75

    def test_mean_of_nothing(self):
        with pytest.raises(ValueError):
            mean_reciprocal_rank([])


class TestNdcg:
    def test_worked_examples(self):
        assert ndcg_at_k(q([0, 0, 1], [0, 0, 1]), 3) == 1.0
        expected = (1 / math.log2(3) + 1 / math.log2(4)) / 2
        assert ndcg_at_k(q([0, 0, 1], [0, 1, 0]), 3) == pytest.approx(expected, abs=1e-15)
        assert expected == pytest.approx(0.5655, abs=5e-5)

    def test_four_way_tie(self):
        expected = (1 + 1 / math.log2(3) + 0.5 + 1 / math.log2(5)) / 4
        query = q([1, 0, 0, 0], [2, 2, 2, 2])
        assert ndcg_at_k(query, 4) == pytest.approx(expected, abs=1e-12)
        assert ndcg_permutation_oracle(query, 4) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(0.6404, abs=5e-5)

    def test_k_beyond_n_truncates(self):
        query = q([0, 1], [1, 0])
        assert ndcg_at_k(query, 10) == ndcg_at_k(query, 2)

    def test_tie_straddling_cutoff(self):
        # accepted ties with one other for ranks 1..2, k=1: half the time at rank 1
        assert ndcg_at_k(q([1, 0, 0], [3, 3, 1]), 1) == pytest.approx(0.5)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            ndcg_at_k(q([1], [0]), 0)

    def test_oracle_bound(self):
        with pytest.raises(ValueError, match="oracle bound exceeded"):
            ndcg_permutation_oracle(q([1] + [0] * 9, range(10)), 3)

    @settings(max_examples=150, deadline=None)
    @given(queries(), st.sampled_from([1, 3, 5]))
    def test_matches_oracle(self, query, k):
        assert abs(ndcg_at_k(query, k) - ndcg_permutation_oracle(query, k)) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(queries())
    def test_ranges(self, query):
        assert 0 < reciprocal_rank(query) <= 1
        for k in (1, 3, 5):
            assert 0 <= ndcg_at_k(query, k) <= 1 + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(queries(), st.randoms(use_true_random=False))
    def test_permutation_invariance(self, query, rnd):
        perm = list(range(query.n_answers))
        rnd.shuffle(perm)
        shuffled = q(query.gold[perm], query.scores[perm])
        assert reciprocal_rank(shuffled) == reciprocal_rank(query)
        for k in (1, 3, 5):
            assert ndcg_at_k(shuffled, k) == pytest.approx(ndcg_at_k(query, k), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(queries())
    def test_monotone_transform_invariance(self, query):
        moved = q(query.gold, np.exp(query.scores) * 3 - 7)
        assert reciprocal_rank(moved) == reciprocal_rank(query)
        for k in (1, 3, 5):
            assert ndcg_at_k(moved, k) == pytest.approx(ndcg_at_k(query, k), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(queries())
    def test_strict_top_equivalence(self, query):
        a = query.accepted_index
        others = np.delete(query.scores, a)
        strict = others.size == 0 or query.scores[a] > others.max()
        assert (reciprocal_rank(query) == 1.0) == strict
        for k in (1, 3, 5):
            assert (ndcg_at_k(query, k) == 1.0) == strict

    @settings(max_examples=100, deadline=None)
    @given(queries(), st.floats(0.1, 5))
    def test_raising_accepted_never_hurts(self, query, bump):
        scores = query.scores.copy()
        scores[query.accepted_index] += bump
        better = q(query.gold, scores)
        assert reciprocal_rank(better) >= reciprocal_rank(query)
        for k in (1, 3, 5):
            assert ndcg_at_k(better, k) >= ndcg_at_k(query, k) - 1e-12


class TestAggregates:
    def test_expected_random_rr(self):
        assert expected_random_rr(1) == 1.0
        assert expected_random_rr(2) == 0.75
        assert expected_random_rr(5) == pytest.approx(137 / 60 / 5)
        with pytest.raises(ValueError):
            expected_random_rr(0)

    def test_random_scores_approach_reference(self):
        rng = np.random.default_rng(3)
        qs = [q([1, 0, 0], rng.random(3)) for _ in range(20000)]
        rows = mrr_vs_answer_count(qs)
        assert len(rows) == 1 and rows[0][0] == 3 and rows[0][2] == 20000
        assert rows[0][1] == pytest.approx(11 / 18, rel=0.01)

    def test_curve_groups_by_count(self):
        qs = [q([1, 0], [1, 0]), q([1, 0, 0], [0, 1, 2]), q([0, 1], [0, 1])]
        assert mrr_vs_answer_count(qs) == [(2, 1.0, 2), (3, 1 / 3, 1)]

    def test_histogram(self):
        assert mrr_histogram([q([1, 0], [1, 0]), q([1, 0], [0, 1])], 2) == [(0.0, 0), (0.5, 2)]
        perfect = mrr_histogram([q([1, 0], [1, 0])] * 4, 10)
        assert perfect[-1] == (0.9, 4) and sum(c for _, c in perfect) == 4
        with pytest.raises(ValueError):
            mrr_histogram([], 10)

    def test_report(self):
        report = evaluate_queries([q([0, 0, 1], [0, 1, 0]), q([1, 0], [1, 0])])
        assert report.n_queries == 2
        assert report.mrr == pytest.approx((1 / 3 + 1) / 2)
        assert isinstance(report.ndcg_at_1, float)


class TestRunCsv:
    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(0)
        qs = [q([0, 1, 0], rng.random(3), q_id=i, a_ids=(10 * i + 1, 10 * i + 2, 10 * i + 3)) for i in range(1, 6)]
        back = read_run_csv(write_run_csv(qs))
        assert [x.q_id for x in back] == [1, 2, 3, 4, 5]
        for a, b in zip(qs, back):
            assert np.array_equal(a.scores, b.scores) and b.a_ids == a.a_ids
        assert evaluate_queries(back) == evaluate_queries(qs)

    def test_missing_column(self):
        with pytest.raises(ValueError, match="lacks columns"):
            read_run_csv("q_id,a_id,score\n1,2,0.5\n")

    def test_malformed_row(self):
        with pytest.raises(ValueError, match="line 2"):
            read_run_csv("q_id,a_id,gold,score\n1,x,1,0.5\n")
