import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cqarank.corpus import (
    RecordError,
    balance_training,
    class_distribution,
    dump_records,
    emit_sql,
    group_threads,
    parse_records,
    split_by_year,
)
from cqarank.synthetic import make_records


def row(**over):
    base = {
        "q_id": 1, "q_title": "How?", "q_body": "<p>q</p>", "q_answer_count": 2, "q_accepted_a": 11,
        "a_id": 11, "a_body": "<p>a</p>", "a_score": 3, "a_comment_count": 0, "user_id": 5,
        "user_reputation": 10, "user_up_votes": 1, "user_down_votes": 0, "user_views": 4,
        "a_accepted": "1", "q_creation_year": 2016,
    }
    base.update(over)
    return json.dumps(base)


class TestParse:
    def test_accepted_string(self):
        (rec,) = parse_records(row())
        assert rec.a_accepted is True and rec.user_about is None

    @pytest.mark.parametrize("flag", ["0", 0, False])
    def test_not_accepted_forms(self, flag):
        (rec,) = parse_records(row(a_accepted=flag, q_accepted_a=99))
        assert rec.a_accepted is False

    def test_inconsistent_acceptance(self):
        with pytest.raises(RecordError, match="inconsistent acceptance"):
            parse_records(row(q_accepted_a=12))

    def test_empty_stream(self):
        assert parse_records("") == []
        assert parse_records([]) == []

    def test_malformed_line_number(self):
        with pytest.raises(RecordError) as info:
            parse_records(row() + "\n{not json\n")
        assert info.value.line == 2

    def test_missing_field_named(self):
        obj = json.loads(row())
        del obj["a_score"]
        with pytest.raises(RecordError, match="a_score") as info:
            parse_records(json.dumps(obj))
        assert info.value.field == "a_score"

    def test_default_year(self):
        obj = json.loads(row())
        del obj["q_creation_year"]
        with pytest.raises(RecordError, match="q_creation_year"):
            parse_records(json.dumps(obj))
        (rec,) = parse_records(json.dumps(obj), default_year=2017)
        assert rec.q_creation_year == 2017

    @pytest.mark.parametrize("field, value", [("a_id", 0), ("user_views", -1), ("q_id", -3)])
    def test_range_checks(self, field, value):
        with pytest.raises(RecordError, match=field):
            parse_records(row(**{field: value, "q_accepted_a": 11 if field != "a_id" else 99, "a_accepted": "1" if field != "a_id" else "0"}))

    def test_negative_score_allowed(self):
        (rec,) = parse_records(row(a_score=-4))
        assert rec.a_score == -4

    def test_optional_fields_and_age(self):
        (rec,) = parse_records(row(user_about="hi", user_age=33, user_location=None))
        assert rec.user_about == "hi" and rec.user_age == 33 and rec.user_location is None

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 40), st.integers(0, 10_000))
    def test_round_trip(self, n_threads, seed):
        recs = make_records(n_threads, "mixed", seed=seed)
        assert parse_records(dump_records(recs)) == recs

    def test_round_trip_survives_line_separator(self):
        recs = [dataclasses.replace(make_records(1, seed=0)[0], a_body="x\u2028y")]
        assert parse_records(dump_records(recs)) == recs


class TestThreads:
    def test_grouping(self):
        recs = parse_records("\n".join([
            row(a_id=11), row(a_id=12, a_accepted="0"), row(a_id=13, a_accepted="0"),
            row(q_id=2, a_id=21, q_accepted_a=21),
            row(q_id=3, a_id=31, q_accepted_a=99, a_accepted="0"),
            row(q_id=3, a_id=32, q_accepted_a=99, a_accepted="0"),
        ]))
        threads, discarded = group_threads(recs)
        assert [t.q_id for t in threads] == [1]
        assert [a.a_id for a in threads[0].answers] == [11, 12, 13]
        assert threads[0].accepted.a_id == 11
        assert discarded == 3

    def test_answers_sorted_by_id(self):
        recs = parse_records("\n".join([row(a_id=12, a_accepted="0"), row(a_id=11)]))
        (thread,), _ = group_threads(recs)
        assert [a.a_id for a in thread.answers] == [11, 12]

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 30), st.integers(0, 1000))
    def test_conservation(self, n, seed):
        recs = make_records(n, "none", seed=seed, answers_per_thread=(1, 4))
        threads, discarded = group_threads(recs)
        assert sum(len(t.answers) for t in threads) + discarded == len(recs)
        for t in threads:
            assert len(t.answers) >= 2 and sum(a.a_accepted for a in t.answers) == 1


class TestBalance:
    def test_exact_split_and_determinism(self):
        pool = make_records(600, "none", seed=0)
        picked = balance_training(pool, 500, seed=3)
        assert class_distribution(picked) == (500, 500)
        assert len({r.a_id for r in picked}) == 1000
        assert picked == balance_training(pool, 500, seed=3)
        assert picked != balance_training(pool, 500, seed=4)

    def test_zero(self):
        assert balance_training(make_records(3, seed=0), 0) == []

    def test_shortfall_message(self):
        pool = make_records(3, "none", seed=0, answers_per_thread=(4, 4))
        with pytest.raises(ValueError, match="insufficient accepted: 3 < 5"):
            balance_training(pool, 5)


class TestSplit:
    def test_years(self):
        recs = []
        for i, year in enumerate((2016, 2017, 2018)):
            recs += make_records(2, seed=i, year=year, first_q_id=100 * (i + 1))
        split = split_by_year(recs, 2016, 2017)
        assert {r.q_creation_year for r in split.train} == {2016}
        assert {r.q_creation_year for r in split.test} == {2017}
        assert not {r.a_id for r in split.train} & {r.a_id for r in split.test}

    def test_empty_test_warns(self):
        with pytest.warns(UserWarning):
            split = split_by_year(make_records(2, seed=0, year=2016), 2016, 2017)
        assert split.test == []

    def test_same_year(self):
        with pytest.raises(ValueError):
            split_by_year([], 2016, 2016)


class TestSql:
    def test_accepted(self):
        sql = emit_sql(True, 2016, 100000)
        assert "question.accepted_answer_id = answer.Id" in sql
        assert "= 2016" in sql and "LIMIT 100000" in sql

    def test_not_accepted(self):
        assert "question.accepted_answer_id != answer.Id" in emit_sql(False, 2016, 100000)

    def test_substitution(self):
        sql = emit_sql(True, 2017, 50)
        assert "= 2017" in sql and "LIMIT 50" in sql and "{" not in sql

    @pytest.mark.parametrize("year, limit", [(2007, 10), (2016, 0), (3000, 5)])
    def test_rejects(self, year, limit):
        with pytest.raises(ValueError):
            emit_sql(True, year, limit)


def test_class_distribution():
    assert class_distribution([]) == (0, 0)
    recs = parse_records("\n".join([row(a_id=i, q_accepted_a=1, a_accepted="1" if i == 1 else "0") for i in range(1, 11)]))
    assert class_distribution(recs) == (1, 9)
