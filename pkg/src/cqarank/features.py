"""Numeric predictors per answer, class correlations and threshold selection."""

from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import AnswerRecord
from .textproc import common_word_count, has_urls, strip_html, text_stats, tokenize

__all__ = [
    "FEATURE_NAMES",
    "build_feature_vector",
    "feature_matrix",
    "correlation",
    "correlation_table",
    "select_features",
    "standardize",
    "Standardizer",
    "write_feature_csv",
]

# Canonical order, ascending by the correlations reported on the 2016 extract.
FEATURE_NAMES: tuple[str, ...] = (
    "has_user_location",
    "has_user_about",
    "has_user_website_url",
    "q_avg_word_len",
    "a_avg_n_word_sent",
    "q_n_sent",
    "q_n_words",
    "user_down_votes",
    "q_max_n_word_sent",
    "q_avg_n_word_sent",
    "a_avg_word_len",
    "user_up_votes",
    "user_views",
    "a_n_sent",
    "has_user_profile_image_url",
    "user_reputation",
    "a_has_urls",
    "a_n_words",
    "qa_n_common",
    "a_score",
    "a_comment_count",
)


def _present(value: Optional[str]) -> float:
    return 1.0 if value is not None and value.strip() else 0.0


def build_feature_vector(record: AnswerRecord, question_body: Optional[str] = None) -> np.ndarray:
    """The 21 predictors in :data:`FEATURE_NAMES` order, as float64.

    ``question_body`` defaults to the record's own ``q_body``.
    """
    q_text = strip_html(record.q_body if question_body is None else question_body)
    a_text = strip_html(record.a_body)
    q = text_stats(q_text)
    a = text_stats(a_text)
    values = {
        "has_user_location": _present(record.user_location),
        "has_user_about": _present(record.user_about),
        "has_user_website_url": _present(record.user_website_url),
        "has_user_profile_image_url": _present(record.user_profile_image_url),
        "q_avg_word_len": q.avg_word_len,
        "q_n_sent": q.n_sent,
        "q_n_words": q.n_words,
        "q_max_n_word_sent": q.max_n_word_sent,
        "q_avg_n_word_sent": q.avg_n_word_sent,
        "a_avg_n_word_sent": a.avg_n_word_sent,
        "a_avg_word_len": a.avg_word_len,
        "a_n_sent": a.n_sent,
        "a_n_words": a.n_words,
        "a_has_urls": float(has_urls(record.a_body)),
        "qa_n_common": common_word_count(tokenize(q_text), tokenize(a_text)),
        "user_down_votes": record.user_down_votes,
        "user_up_votes": record.user_up_votes,
        "user_views": record.user_views,
        "user_reputation": record.user_reputation,
        "a_score": record.a_score,
        "a_comment_count": record.a_comment_count,
    }
    return np.array([values[name] for name in FEATURE_NAMES], dtype=np.float64)


def feature_matrix(records: Sequence[AnswerRecord]) -> np.ndarray:
    if not records:
        return np.zeros((0, len(FEATURE_NAMES)))
    return np.vstack([build_feature_vector(r) for r in records])


def correlation(feature_column: Sequence[float], class_column: Sequence[float]) -> float:
    """Pearson correlation (point-biserial when one column is 0/1)."""
    x = np.asarray(feature_column, dtype=np.float64)
    y = np.asarray(class_column, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("columns must be 1-D and of equal length")
    if x.size < 2:
        raise ValueError("need at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("undefined correlation: zero variance")
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def correlation_table(
    matrix: np.ndarray, labels: Sequence[int], names: Sequence[str] = FEATURE_NAMES
) -> dict[str, float]:
    """Correlation of each column with the class; zero-variance columns are skipped."""
    table = {}
    for j, name in enumerate(names):
        try:
            table[name] = correlation(matrix[:, j], labels)
        except ValueError:
            continue
    return table


def select_features(correlations: Mapping[str, float], threshold: float = 0.05) -> list[str]:
    """Names with ``|r| > threshold``, sorted by ``r`` ascending."""
    if not correlations:
        raise ValueError("empty correlation mapping")
    kept = [(r, name) for name, r in correlations.items() if abs(r) > threshold]
    return [name for r, name in sorted(kept, key=lambda item: item[0])]


class Standardizer:
    """Column-wise z-scoring with statistics frozen from a training matrix."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, train_matrix: np.ndarray) -> "Standardizer":
        train_matrix = np.asarray(train_matrix, dtype=np.float64)
        if train_matrix.ndim != 2 or train_matrix.shape[0] == 0:
            raise ValueError("train matrix must be non-empty and 2-D")
        return cls(train_matrix.mean(axis=0), train_matrix.std(axis=0))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        matrix = np.asarray(matrix, dtype=np.float64)
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (matrix - self.mean) / safe
        out[:, self.std == 0] = 0.0
        return out

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Standardizer":
        return cls(np.array(data["mean"]), np.array(data["std"]))


def standardize(train_matrix: np.ndarray, apply_matrix: np.ndarray):
    """Scale ``apply_matrix`` with train mean/stddev.

    Returns ``(scaled, (mean, std))``. Columns constant on the training set map
    to zero.
    """
    scaler = Standardizer.fit(train_matrix)
    return scaler.transform(apply_matrix), (scaler.mean, scaler.std)


def write_feature_csv(records: Iterable[AnswerRecord], fh=None) -> str:
    """CSV with ``q_id,a_id,a_accepted`` followed by the 21 feature columns."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("q_id", "a_id", "a_accepted") + FEATURE_NAMES)
    for rec in records:
        vec = build_feature_vector(rec)
        writer.writerow([rec.q_id, rec.a_id, int(rec.a_accepted)] + [repr(float(v)) for v in vec])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
