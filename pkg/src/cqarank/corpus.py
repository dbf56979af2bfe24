"""Answer records: parsing, validation, thread grouping, balancing, splitting.

The on-disk format is JSON Lines whose keys are the column aliases of the
BigQuery extraction query (see :func:`emit_sql`), plus ``q_creation_year``.
"""

from __future__ import annotations

import datetime
import json
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass
from typing import IO, Iterable, Optional, Union

import numpy as np

__all__ = [
    "RecordError",
    "AnswerRecord",
    "QuestionThread",
    "DatasetSplit",
    "parse_records",
    "read_records",
    "dump_records",
    "group_threads",
    "balance_training",
    "split_by_year",
    "emit_sql",
    "class_distribution",
    "SQL_TEMPLATE",
]


class RecordError(ValueError):
    """A JSON Lines row that cannot be turned into an :class:`AnswerRecord`."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class AnswerRecord:
    q_id: int
    q_title: str
    q_body: str
    q_answer_count: int
    q_accepted_a: int
    a_id: int
    a_body: str
    a_score: int
    a_comment_count: int
    user_id: int
    user_reputation: int
    user_up_votes: int
    user_down_votes: int
    user_views: int
    a_accepted: bool
    q_creation_year: int
    user_about: Optional[str] = None
    user_location: Optional[str] = None
    user_profile_image_url: Optional[str] = None
    user_website_url: Optional[str] = None
    # Columns selected by the query but not used as predictors.
    user_age: Optional[int] = None
    user_creation_date: Optional[str] = None
    user_last_access_date: Optional[str] = None


_INT_FIELDS = (
    "q_id", "q_answer_count", "q_accepted_a", "a_id", "a_score", "a_comment_count",
    "user_id", "user_reputation", "user_up_votes", "user_down_votes", "user_views",
    "q_creation_year",
)
_STR_FIELDS = ("q_title", "q_body", "a_body")
_POSITIVE = ("q_id", "a_id", "user_id")
_NON_NEGATIVE = (
    "q_answer_count", "a_comment_count", "user_reputation", "user_up_votes",
    "user_down_votes", "user_views",
)
_OPTIONAL_STR = (
    "user_about", "user_location", "user_profile_image_url", "user_website_url",
    "user_creation_date", "user_last_access_date",
)
REQUIRED_FIELDS = _INT_FIELDS + _STR_FIELDS + ("a_accepted",)


@dataclass(frozen=True)
class QuestionThread:
    q_id: int
    q_title: str
    q_body: str
    answers: tuple[AnswerRecord, ...]

    @property
    def accepted(self) -> AnswerRecord:
        return next(a for a in self.answers if a.a_accepted)


@dataclass(frozen=True)
class DatasetSplit:
    train: list[AnswerRecord]
    test: list[AnswerRecord]
    seed: Optional[int] = None


def _as_int(value, name: str, line: int) -> int:
    if isinstance(value, bool):
        raise RecordError(f"field {name!r} must be an integer, got boolean", line, name)
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise RecordError(f"field {name!r} must be an integer, got {value!r}", line, name)


def _as_accepted(value, line: int) -> bool:
    if isinstance(value, bool):
        return value
    if value in (0, 1) and isinstance(value, int):
        return bool(value)
    if isinstance(value, str) and value.strip() in ("0", "1"):
        return value.strip() == "1"
    raise RecordError(f"field 'a_accepted' must be 0/1, got {value!r}", line, "a_accepted")


def _record_from_obj(obj: dict, line: int, default_year: Optional[int]) -> AnswerRecord:
    if not isinstance(obj, dict):
        raise RecordError("expected a JSON object", line)
    obj = dict(obj)
    if obj.get("q_creation_year") is None and default_year is not None:
        obj["q_creation_year"] = default_year
    for name in REQUIRED_FIELDS:
        if obj.get(name) is None:
            raise RecordError(f"missing required field {name!r}", line, name)
    values = {name: _as_int(obj[name], name, line) for name in _INT_FIELDS}
    for name in _STR_FIELDS:
        if not isinstance(obj[name], str):
            raise RecordError(f"field {name!r} must be a string", line, name)
        values[name] = obj[name]
    values["a_accepted"] = _as_accepted(obj["a_accepted"], line)
    for name in _OPTIONAL_STR:
        v = obj.get(name)
        values[name] = None if v is None else str(v)
    age = obj.get("user_age")
    values["user_age"] = None if age is None else _as_int(age, "user_age", line)

    for name in _POSITIVE:
        if values[name] <= 0:
            raise RecordError(f"field {name!r} must be positive, got {values[name]}", line, name)
    for name in _NON_NEGATIVE:
        if values[name] < 0:
            raise RecordError(f"field {name!r} must be non-negative, got {values[name]}", line, name)
    if values["a_accepted"] != (values["q_accepted_a"] == values["a_id"]):
        raise RecordError(
            f"inconsistent acceptance: a_accepted={int(values['a_accepted'])} but "
            f"q_accepted_a={values['q_accepted_a']}, a_id={values['a_id']}",
            line,
            "a_accepted",
        )
    return AnswerRecord(**values)


def parse_records(
    stream: Union[str, Iterable[str]], default_year: Optional[int] = None
) -> list[AnswerRecord]:
    """Parse JSON Lines text (a string or an iterable of lines).

    ``default_year`` fills ``q_creation_year`` for dumps produced by the
    extraction query, which filters on the year instead of selecting it.
    Blank lines are skipped; line numbers in errors are 1-based.
    """
    lines = stream.split("\n") if isinstance(stream, str) else stream
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"malformed JSON: {exc.msg}", lineno) from None
        records.append(_record_from_obj(obj, lineno, default_year))
    return records


def read_records(path, default_year: Optional[int] = None) -> list[AnswerRecord]:
    with open(path, encoding="utf-8") as fh:
        return parse_records(fh, default_year=default_year)


def dump_records(records: Iterable[AnswerRecord], fh: Optional[IO[str]] = None) -> str:
    """Serialize records as JSON Lines; ``a_accepted`` is written as ``"0"``/``"1"``."""
    lines = []
    for rec in records:
        obj = asdict(rec)
        obj["a_accepted"] = "1" if rec.a_accepted else "0"
        lines.append(json.dumps(obj, ensure_ascii=False, sort_keys=True))
    text = "".join(line + "\n" for line in lines)
    if fh is not None:
        fh.write(text)
    return text


def group_threads(records: Iterable[AnswerRecord]) -> tuple[list[QuestionThread], int]:
    """Group answers by question, keeping only rankable threads.

    A thread survives when it has at least two answers and exactly one of them
    is accepted. Returns the threads ordered by ``q_id`` and the number of
    records that were discarded.
    """
    by_question: dict[int, list[AnswerRecord]] = defaultdict(list)
    for rec in records:
        by_question[rec.q_id].append(rec)
    threads, discarded = [], 0
    for q_id in sorted(by_question):
        answers = sorted(by_question[q_id], key=lambda r: r.a_id)
        n_accepted = sum(a.a_accepted for a in answers)
        if len(answers) < 2 or n_accepted != 1:
            discarded += len(answers)
            continue
        first = answers[0]
        threads.append(QuestionThread(q_id, first.q_title, first.q_body, tuple(answers)))
    return threads, discarded


def balance_training(
    records: list[AnswerRecord], n_per_class: int, seed: int = 0
) -> list[AnswerRecord]:
    """Sample ``n_per_class`` accepted and not-accepted records without replacement."""
    if n_per_class < 0:
        raise ValueError("n_per_class must be non-negative")
    accepted = [r for r in records if r.a_accepted]
    rejected = [r for r in records if not r.a_accepted]
    if len(accepted) < n_per_class:
        raise ValueError(f"insufficient accepted: {len(accepted)} < {n_per_class}")
    if len(rejected) < n_per_class:
        raise ValueError(f"insufficient not accepted: {len(rejected)} < {n_per_class}")
    if n_per_class == 0:
        return []
    rng = np.random.default_rng(seed)
    picked = [accepted[i] for i in rng.choice(len(accepted), n_per_class, replace=False)]
    picked += [rejected[i] for i in rng.choice(len(rejected), n_per_class, replace=False)]
    return [picked[i] for i in rng.permutation(len(picked))]


def split_by_year(
    records: Iterable[AnswerRecord], train_year: int, test_year: int, seed: Optional[int] = None
) -> DatasetSplit:
    if train_year == test_year:
        raise ValueError(f"train and test year overlap ({train_year})")
    records = list(records)
    train = [r for r in records if r.q_creation_year == train_year]
    test = [r for r in records if r.q_creation_year == test_year]
    if not test:
        warnings.warn(f"no records for test year {test_year}", stacklevel=2)
    return DatasetSplit(train=train, test=test, seed=seed)


SQL_TEMPLATE = """\
SELECT
    question.id as q_id,
    question.Title AS q_title,
    question.Body AS q_body,
    question.answer_count as q_answer_count,
    question.accepted_answer_id as q_accepted_a,
    answer.Id AS a_id,
    answer.Body AS a_body,
    answer.Score as a_score,
    answer.comment_count AS a_comment_count,
    user.id as user_id,
    user.about_me as user_about,
    user.age as user_age,
    user.creation_date as user_creation_date,
    user.last_access_date as user_last_access_date,
    user.location as user_location,
    user.reputation as user_reputation,
    user.up_votes as user_up_votes,
    user.down_votes as user_down_votes,
    user.views as user_views,
    user.profile_image_url as user_profile_image_url,
    user.website_url as user_website_url,
    CASE WHEN question.accepted_answer_id = answer.Id
      THEN '1'
      ELSE '0'
    END
    AS a_accepted
  FROM `bigquery-public-data.stackoverflow.posts_answers` AS answer
  JOIN `bigquery-public-data.stackoverflow.posts_questions` question ON question.Id = answer.parent_id
  JOIN `bigquery-public-data.stackoverflow.users` user on user.id = answer.owner_user_id
  WHERE answer.post_type_id = 2 AND question.answer_count > 1
    AND question.accepted_answer_id IS NOT NULL
    AND question.accepted_answer_id IN (SELECT Id FROM `bigquery-public-data.stackoverflow.posts_answers`)
    AND question.accepted_answer_id {check} answer.Id
    AND EXTRACT(YEAR FROM question.creation_date) = {year}
  ORDER BY question.ID ASC, answer.Id ASC
  LIMIT {limit}
"""


def emit_sql(accepted: bool, year: int, limit: int) -> str:
    """Extraction query for accepted (``=``) or not-accepted (``!=``) answers."""
    if not 2008 <= year <= datetime.date.today().year:
        raise ValueError(f"year {year} outside [2008, current]")
    if limit <= 0:
        raise ValueError("limit must be positive")
    return SQL_TEMPLATE.format(check="=" if accepted else "!=", year=int(year), limit=int(limit))


def class_distribution(records: Iterable[AnswerRecord]) -> tuple[int, int]:
    """``(accepted, not_accepted)`` counts."""
    accepted = rejected = 0
    for rec in records:
        if rec.a_accepted:
            accepted += 1
        else:
            rejected += 1
    return accepted, rejected
