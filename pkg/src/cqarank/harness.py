"""Experiment orchestration: encoders, training, per-thread ranking, reports, sweeps.

Every run is a pure function of its :class:`ExperimentConfig`. Randomness is
derived from the single top-level ``seed`` by stage name, encoders are fitted
on the training records only, and every report file is plain CSV with fixed
formatting so that repeated runs are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
import zlib
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import forest, neural
from .corpus import AnswerRecord, QuestionThread, balance_training, group_threads, read_records
from .features import FEATURE_NAMES, Standardizer, correlation_table, feature_matrix, select_features
from .metrics import (
    MetricReport,
    RankingQuery,
    evaluate_queries,
    mrr_histogram,
    mrr_vs_answer_count,
    write_run_csv,
)
from .neural import HEAD_GRID, ModelConfig, SiameseRanker
from .textproc import strip_html, tokenize
from .vectorize import (
    EmbeddingTable,
    TfidfModel,
    encode_sequence,
    fit_tfidf,
    load_embeddings,
    summarize_sentences,
    tfidf_matrix,
)

__all__ = [
    "MODEL_KINDS",
    "FEATURE_MODES",
    "SWEEP_AXES",
    "DEFAULT_AXIS_VALUES",
    "ExperimentConfig",
    "Encoders",
    "ExperimentResult",
    "SweepRow",
    "SweepReport",
    "stage_seed",
    "load_config",
    "parse_config",
    "fit_encoders",
    "train_model",
    "score_records",
    "rank_answers",
    "run_on_records",
    "run_experiment",
    "run_sweep",
    "emit_report",
]

MODEL_KINDS = ("rf", "adaboost", "gbt", "neural")
FEATURE_MODES = ("numerical", "text", "both")
SWEEP_AXES = ("none", "learning_rate", "max_sentences", "max_seq_len", "embedding_source", "lstm_depth", "head_depth")
DEFAULT_AXIS_VALUES: dict[str, tuple] = {
    "learning_rate": (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
    "max_sentences": (-1, 1, 2, 3, 4),
    "max_seq_len": (100, 150, 200, 250, 300),
    "embedding_source": ("wiki", "twitter"),
    "lstm_depth": (1, 2, 3, 4),
    "head_depth": (0, 1, 2, 3),
}
REPORT_HEADER = ("name", "NDCG@1", "NDCG@3", "NDCG@5", "MRR")


def stage_seed(seed: int, stage: str) -> int:
    """A 32-bit seed for one named pipeline stage, derived from the top-level seed."""
    return int(np.random.SeedSequence([int(seed), zlib.crc32(stage.encode("utf-8"))]).generate_state(1)[0])


@dataclass
class ExperimentConfig:
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    embedding_path: Optional[str] = None
    embedding_files: dict[str, str] = field(default_factory=dict)
    embedding_source: Optional[str] = None
    model: str = "gbt"
    features: str = "both"
    sweep_axis: str = "none"
    axis_values: tuple = ()
    model_config: ModelConfig = field(default_factory=ModelConfig)
    seed: int = 0
    output_dir: Optional[str] = None
    balance_per_class: Optional[int] = None
    feature_threshold: Optional[float] = None
    max_vocab: int = 1000
    max_sentences: int = 2
    n_estimators: int = 100
    default_year: Optional[int] = None

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.features not in FEATURE_MODES:
            raise ValueError(f"features must be one of {FEATURE_MODES}, got {self.features!r}")
        if self.model == "neural" and self.features == "numerical":
            raise ValueError("the neural ranker needs text; use features 'text' or 'both'")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
        self.axis_values = tuple(self.axis_values)
        if self.sweep_axis != "none" and not self.axis_values:
            self.axis_values = DEFAULT_AXIS_VALUES[self.sweep_axis]
        if self.max_sentences != -1 and self.max_sentences < 1:
            raise ValueError("max_sentences must be -1 or >= 1")
        if self.max_vocab < 1 or self.n_estimators < 1:
            raise ValueError("max_vocab and n_estimators must be positive")

    def neural_config(self, numerical_feature_count: int = 0) -> ModelConfig:
        """The model config actually trained: numerical inputs follow the feature mode."""
        use_num = self.features == "both"
        return dataclasses.replace(
            self.model_config,
            use_numerical_features=use_num,
            numerical_feature_count=numerical_feature_count if use_num else 0,
            seed=stage_seed(self.seed, "neural-train"),
        )

    def resolve_embedding_path(self) -> Optional[str]:
        if self.embedding_source is not None:
            if self.embedding_source not in self.embedding_files:
                raise ValueError(f"no embedding file configured for source {self.embedding_source!r}")
            return self.embedding_files[self.embedding_source]
        return self.embedding_path

    def echo(self) -> dict:
        """JSON-ready view of every field."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "model_config":
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            elif isinstance(value, dict):
                value = dict(sorted(value.items()))
            out[f.name] = value
        return out


def _coerce(raw: str, example, name: str):
    raw = raw.strip()
    if raw.lower() in ("none", "null", ""):
        return None
    if isinstance(example, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(example, int):
        return int(raw)
    if isinstance(example, float):
        return float(raw)
    return raw


def _parse_scalar(raw: str):
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


_INT_FIELDS = {"seed", "balance_per_class", "max_vocab", "max_sentences", "n_estimators", "default_year"}
_FLOAT_FIELDS = {"feature_threshold"}


def parse_config(text: str) -> ExperimentConfig:
    """Read flat ``key = value`` lines; ``#`` starts a comment.

    Keys are :class:`ExperimentConfig` field names or :class:`ModelConfig`
    field names. Lists are comma separated; ``embedding_files`` takes
    ``name:path`` pairs. The model's numerical inputs follow ``features`` and
    the model seed follows ``seed``, so neither is a key of its own.
    """
    exp_fields = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"model_config"}
    model_defaults = ModelConfig()
    model_fields = {f.name for f in dataclasses.fields(ModelConfig)} - {"seed"}
    derived = {"use_numerical_features", "numerical_feature_count"}
    exp_kwargs: dict = {}
    model_kwargs: dict = {}
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in exp_fields:
            if key == "axis_values":
                exp_kwargs[key] = tuple(_parse_scalar(v.strip()) for v in value.split(",") if v.strip())
            elif key == "embedding_files":
                pairs = {}
                for item in filter(None, (v.strip() for v in value.split(","))):
                    name, sep, path = item.partition(":")
                    if not sep:
                        raise ValueError(f"line {lineno}: embedding_files entries are name:path")
                    pairs[name.strip()] = path.strip()
                exp_kwargs[key] = pairs
            elif key in _INT_FIELDS:
                exp_kwargs[key] = _coerce(value, 0, key)
            elif key in _FLOAT_FIELDS:
                exp_kwargs[key] = _coerce(value, 0.0, key)
            else:
                exp_kwargs[key] = _coerce(value, "", key)
        elif key in derived:
            raise ValueError(f"line {lineno}: {key} follows from 'features' and cannot be set")
        elif key in model_fields:
            if key == "head_hidden_sizes":
                model_kwargs[key] = tuple(int(v) for v in value.split(",") if v.strip())
            else:
                model_kwargs[key] = _coerce(value, getattr(model_defaults, key), key)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return ExperimentConfig(model_config=ModelConfig(**model_kwargs), **exp_kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _answer_text(record: AnswerRecord) -> str:
    return strip_html(record.a_body)


def _question_text(record: AnswerRecord) -> str:
    return record.q_title + "\n" + strip_html(record.q_body)


@dataclass
class Encoders:
    """Everything fitted on training data that turns records into model inputs."""

    mode: str
    feature_columns: tuple[str, ...]
    standardizer: Optional[Standardizer]
    tfidf: Optional[TfidfModel]
    table: Optional[EmbeddingTable] = None
    max_sentences: int = 2
    max_seq_len: int = 100

    @property
    def uses_numerical(self) -> bool:
        return self.mode in ("numerical", "both")

    @property
    def uses_text(self) -> bool:
        return self.mode in ("text", "both")

    def numerical(self, records: Sequence[AnswerRecord]) -> np.ndarray:
        cols = [FEATURE_NAMES.index(name) for name in self.feature_columns]
        return self.standardizer.transform(feature_matrix(records)[:, cols])

    def bag_of_words(self, records: Sequence[AnswerRecord]) -> np.ndarray:
        return tfidf_matrix(self.tfidf, (tokenize(_answer_text(r)) for r in records))

    def design_matrix(self, records: Sequence[AnswerRecord]) -> np.ndarray:
        """Columns for the tree models: TF-IDF block first, then numerical block."""
        blocks = []
        if self.uses_text:
            blocks.append(self.bag_of_words(records))
        if self.uses_numerical:
            blocks.append(self.numerical(records))
        return np.hstack(blocks)

    def batch(self, records: Sequence[AnswerRecord]) -> neural.Batch:
        if self.table is None:
            raise ValueError("encoders carry no embedding table")
        qs = [encode_sequence(_question_text(r), self.table, self.max_seq_len) for r in records]
        answers = [
            encode_sequence(summarize_sentences(_answer_text(r), self.max_sentences), self.table, self.max_seq_len)
            for r in records
        ]
        labels = [float(r.a_accepted) for r in records]
        numerical = self.numerical(records) if self.mode == "both" else None
        return neural.Batch.from_sequences(qs, answers, labels, numerical)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "feature_columns": list(self.feature_columns),
            "standardizer": None if self.standardizer is None else self.standardizer.to_dict(),
            "tfidf": None if self.tfidf is None else self.tfidf.to_dict(),
            "embedding_vocabulary_size": None if self.table is None else len(self.table.index),
            "max_sentences": self.max_sentences,
            "max_seq_len": self.max_seq_len,
        }


def _labels(records: Sequence[AnswerRecord]) -> np.ndarray:
    return np.array([1.0 if r.a_accepted else 0.0 for r in records])


def fit_encoders(
    config: ExperimentConfig, train: Sequence[AnswerRecord], table: Optional[EmbeddingTable] = None
) -> Encoders:
    """Fit TF-IDF and standardization on ``train`` as the feature mode requires."""
    if not train:
        raise ValueError("no training records")
    columns: tuple[str, ...] = ()
    scaler = None
    if config.features in ("numerical", "both"):
        matrix = feature_matrix(train)
        if config.feature_threshold is not None:
            table_r = correlation_table(matrix, _labels(train))
            columns = tuple(select_features(table_r, config.feature_threshold))
            if not columns:
                raise ValueError(f"no feature passes |r| > {config.feature_threshold}")
        else:
            columns = FEATURE_NAMES
        cols = [FEATURE_NAMES.index(name) for name in columns]
        scaler = Standardizer.fit(matrix[:, cols])
    tfidf = None
    if config.features in ("text", "both") and config.model != "neural":
        tfidf = fit_tfidf([tokenize(_answer_text(r)) for r in train], max_vocab=config.max_vocab)
        if not tfidf.vocabulary:
            raise ValueError("TF-IDF vocabulary is empty: no token occurs in two training answers")
    return Encoders(
        mode=config.features,
        feature_columns=columns,
        standardizer=scaler,
        tfidf=tfidf,
        table=table,
        max_sentences=config.max_sentences,
        max_seq_len=config.model_config.max_seq_len,
    )


Model = Union[forest.ForestModel, SiameseRanker]


def train_model(
    config: ExperimentConfig, encoders: Encoders, train: Sequence[AnswerRecord]
) -> tuple[Model, list[float]]:
    """Fit the configured model; returns it with a loss trace (empty for forests)."""
    if config.model == "neural":
        model_cfg = config.neural_config(len(encoders.feature_columns))
        model = neural.init_model(model_cfg, encoders.table, seed=stage_seed(config.seed, "neural-init"))
        return neural.train(model, encoders.batch(train))
    X = encoders.design_matrix(train)
    y = _labels(train)
    seed = stage_seed(config.seed, "forest")
    if config.model == "rf":
        return forest.train_random_forest(X, y, n_trees=config.n_estimators, seed=seed), []
    if config.model == "adaboost":
        return forest.train_adaboost(X, y, n_rounds=config.n_estimators, seed=seed), []
    trace: list[float] = []
    return forest.train_gbt(X, y, n_rounds=config.n_estimators, seed=seed, loss_trace=trace), trace


def score_records(model: Model, records: Sequence[AnswerRecord], encoders: Encoders) -> np.ndarray:
    """Class-1 probability for every record, in input order."""
    if not records:
        return np.zeros(0)
    if isinstance(model, SiameseRanker):
        return neural.forward(model, encoders.batch(records))
    return forest.predict_proba(model, encoders.design_matrix(records))


def _order(thread: QuestionThread, scores: np.ndarray) -> list[int]:
    ids = [a.a_id for a in thread.answers]
    return [ids[i] for i in sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))]


def _query(thread: QuestionThread, scores: np.ndarray) -> RankingQuery:
    gold = np.array([1.0 if a.a_accepted else 0.0 for a in thread.answers])
    return RankingQuery(gold, np.asarray(scores, dtype=np.float64), q_id=thread.q_id,
                        a_ids=tuple(a.a_id for a in thread.answers))


def rank_answers(model: Model, thread: QuestionThread, encoders: Encoders) -> tuple[list[int], RankingQuery]:
    """Answer ids by descending score (ties by ``a_id``) and the thread's query."""
    scores = score_records(model, thread.answers, encoders)
    return _order(thread, scores), _query(thread, scores)


@dataclass
class ExperimentResult:
    name: str
    report: MetricReport
    queries: list[RankingQuery]
    config: dict
    loss_trace: list[float]
    model: Model
    encoders: Encoders
    seconds: float = 0.0


def _check_files(config: ExperimentConfig):
    paths = [("train_path", config.train_path), ("test_path", config.test_path)]
    if config.model == "neural":
        paths.append(("embedding file", config.resolve_embedding_path()))
    for label, path in paths:
        if path is None:
            raise ValueError(f"{label} is not configured")
        if not os.path.isfile(path):
            raise FileNotFoundError(f"{label} not found: {path}")


def run_on_records(
    config: ExperimentConfig,
    train: Sequence[AnswerRecord],
    test: Sequence[AnswerRecord],
    table: Optional[EmbeddingTable] = None,
    name: Optional[str] = None,
) -> ExperimentResult:
    """Train on ``train`` and evaluate on the rankable threads of ``test``."""
    started = time.perf_counter()
    if config.model == "neural" and table is None:
        raise ValueError("the neural ranker needs an embedding table")
    if table is not None and table.dimension != config.model_config.embedding_dimension:
        raise ValueError(
            f"embedding dimension {table.dimension} != configured {config.model_config.embedding_dimension}"
        )
    train = list(train)
    if config.balance_per_class is not None:
        train = balance_training(train, config.balance_per_class, seed=stage_seed(config.seed, "balance"))
    threads, _ = group_threads(test)
    if not threads:
        raise ValueError("test data holds no rankable thread")
    encoders = fit_encoders(config, train, table)
    model, trace = train_model(config, encoders, train)
    echo = config.echo()
    if isinstance(model, SiameseRanker):
        echo["model_config"] = model.config.to_dict()
    answers = [a for t in threads for a in t.answers]
    scores = score_records(model, answers, encoders)
    queries, start = [], 0
    for t in threads:
        queries.append(_query(t, scores[start : start + len(t.answers)]))
        start += len(t.answers)
    return ExperimentResult(
        name=name or f"{config.model}-{config.features}",
        report=evaluate_queries(queries),
        queries=queries,
        config=echo,
        loss_trace=[float(v) for v in trace],
        model=model,
        encoders=encoders,
        seconds=time.perf_counter() - started,
    )


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _curve_csv(queries: Sequence[RankingQuery]) -> str:
    lines = ["n_answers,mrr,n_queries"]
    lines += [f"{n},{mrr:.6f},{count}" for n, mrr, count in mrr_vs_answer_count(queries)]
    return "\n".join(lines) + "\n"


def _histogram_csv(queries: Sequence[RankingQuery]) -> str:
    lines = ["bin_start,count"]
    lines += [f"{start:.1f},{count}" for start, count in mrr_histogram(queries)]
    return "\n".join(lines) + "\n"


def write_artifacts(result: ExperimentResult, output_dir: str) -> None:
    """Reports, per-answer run dump, curves, config echo, encoders and the model."""
    os.makedirs(output_dir, exist_ok=True)
    _write(os.path.join(output_dir, "report.csv"), emit_report([(result.name, result.report)]))
    _write(os.path.join(output_dir, "run.csv"), write_run_csv(result.queries))
    _write(os.path.join(output_dir, "mrr_vs_answer_count.csv"), _curve_csv(result.queries))
    _write(os.path.join(output_dir, "mrr_histogram.csv"), _histogram_csv(result.queries))
    _write(os.path.join(output_dir, "config.json"), json.dumps(result.config, indent=2, sort_keys=True) + "\n")
    _write(os.path.join(output_dir, "encoders.json"), json.dumps(result.encoders.to_dict(), sort_keys=True) + "\n")
    if isinstance(result.model, SiameseRanker):
        neural.save_checkpoint(result.model, os.path.join(output_dir, "model.npz"))
    else:
        _write(os.path.join(output_dir, "model.json"), forest.save_model(result.model))


def _load_inputs(config: ExperimentConfig):
    _check_files(config)
    train = read_records(config.train_path, default_year=config.default_year)
    test = read_records(config.test_path, default_year=config.default_year)
    table = None
    if config.model == "neural":
        table = load_embeddings(config.resolve_embedding_path(), config.model_config.embedding_dimension)
    return train, test, table


def run_experiment(config: ExperimentConfig, name: Optional[str] = None) -> ExperimentResult:
    """Load data, train, evaluate and (with ``output_dir`` set) write artifacts.

    Missing or unparseable inputs raise before any training starts.
    """
    train, test, table = _load_inputs(config)
    result = run_on_records(config, train, test, table, name=name)
    if config.output_dir is not None:
        write_artifacts(result, config.output_dir)
    return result


@dataclass
class SweepRow:
    value: object
    report: MetricReport
    config: dict
    seconds: float

    @property
    def name(self) -> str:
        return str(self.value)


@dataclass
class SweepReport:
    axis: str
    rows: list[SweepRow]
    config: dict


def _apply_axis(config: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    mc = config.model_config
    if axis == "learning_rate":
        mc = dataclasses.replace(mc, learning_rate=float(value))
    elif axis == "max_seq_len":
        mc = dataclasses.replace(mc, max_seq_len=int(value))
    elif axis == "lstm_depth":
        mc = dataclasses.replace(mc, lstm_depth=int(value))
    elif axis == "head_depth":
        depth = int(value)
        if not 0 <= depth < len(HEAD_GRID):
            raise ValueError(f"head_depth must be in 0..{len(HEAD_GRID) - 1}")
        mc = dataclasses.replace(mc, head_hidden_sizes=HEAD_GRID[depth])
    elif axis == "max_sentences":
        return dataclasses.replace(config, max_sentences=int(value), sweep_axis="none", axis_values=())
    elif axis == "embedding_source":
        return dataclasses.replace(config, embedding_source=str(value), sweep_axis="none", axis_values=())
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return dataclasses.replace(config, model_config=mc, sweep_axis="none", axis_values=())


def _format_value(value) -> str:
    return f"{value:g}" if isinstance(value, float) else str(value)


def run_sweep(
    config: ExperimentConfig,
    records: Optional[tuple[Sequence[AnswerRecord], Sequence[AnswerRecord]]] = None,
    tables: Optional[Mapping[str, EmbeddingTable]] = None,
) -> SweepReport:
    """One experiment per axis value with everything else held fixed.

    ``records`` (train, test) and ``tables`` (by embedding source, ``None``
    for the default) bypass the files named in the config. With
    ``output_dir`` set, each row writes into ``<output_dir>/<axis>=<value>``
    and the sweep table goes to ``<output_dir>/sweep_<axis>.csv``.
    """
    axis = config.sweep_axis
    if axis == "none":
        raise ValueError("sweep_axis is not set")
    if config.model != "neural":
        raise ValueError("sweep axes vary the neural ranker; set model = neural")
    rows = []
    for value in config.axis_values:
        label = f"{axis}={_format_value(value)}"
        row_dir = None if config.output_dir is None else os.path.join(config.output_dir, label)
        try:
            row_cfg = dataclasses.replace(_apply_axis(config, axis, value), output_dir=row_dir)
            if records is None:
                result = run_experiment(row_cfg, name=label)
            else:
                source = row_cfg.embedding_source
                table = (tables or {}).get(source)
                if table is None:
                    table = load_embeddings(row_cfg.resolve_embedding_path(), row_cfg.model_config.embedding_dimension)
                result = run_on_records(row_cfg, records[0], records[1], table, name=label)
                if row_dir is not None:
                    write_artifacts(result, row_dir)
        except Exception as exc:
            raise type(exc)(f"sweep {label}: {exc}") from exc
        rows.append(SweepRow(value, result.report, result.config, result.seconds))
    report = SweepReport(axis, rows, config.echo())
    if config.output_dir is not None:
        os.makedirs(config.output_dir, exist_ok=True)
        _write(os.path.join(config.output_dir, f"sweep_{axis}.csv"), emit_report(report))
    return report


ReportLike = Union[MetricReport, SweepReport, Sequence[tuple[str, MetricReport]]]


def _rows(report: ReportLike) -> list[tuple[str, MetricReport]]:
    if isinstance(report, MetricReport):
        return [("run", report)]
    if isinstance(report, SweepReport):
        return [(_format_value(r.value), r.report) for r in report.rows]
    return list(report)


def emit_report(report: ReportLike, format: str = "csv") -> str:
    """Render metric rows as CSV or a markdown table, 6 decimals per value."""
    if format not in ("csv", "markdown"):
        raise ValueError("format must be 'csv' or 'markdown'")
    rows = [
        (name, f"{r.ndcg_at_1:.6f}", f"{r.ndcg_at_3:.6f}", f"{r.ndcg_at_5:.6f}", f"{r.mrr:.6f}")
        for name, r in _rows(report)
    ]
    if format == "csv":
        return "".join(",".join(cells) + "\n" for cells in [REPORT_HEADER, *rows])
    lines = ["| " + " | ".join(REPORT_HEADER) + " |", "|" + "---|" * len(REPORT_HEADER)]
    lines += ["| " + " | ".join(cells) + " |" for cells in rows]
    return "\n".join(lines) + "\n"
