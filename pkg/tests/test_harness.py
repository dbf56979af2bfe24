import dataclasses
import json
import os

import numpy as np
import pytest

from cqarank import harness
from cqarank.corpus import dump_records, group_threads
from cqarank.harness import (
    ExperimentConfig,
    SweepReport,
    emit_report,
    parse_config,
    rank_answers,
    run_experiment,
    run_on_records,
    run_sweep,
    stage_seed,
)
from cqarank.metrics import MetricReport, evaluate_queries, read_run_csv
from cqarank.neural import ModelConfig
from cqarank.synthetic import make_embeddings, make_records
from cqarank.vectorize import EmbeddingTable, write_embeddings

TINY = ModelConfig(embedding_dimension=16, lstm_hidden=6, epochs=2, batch_size=64, max_seq_len=30)


@pytest.fixture
def files(tmp_path):
    train = make_records(60, "score", seed=1, year=2016)
    test = make_records(25, "score", seed=2, year=2017, first_q_id=5000)
    paths = {}
    for name, recs in (("train", train), ("test", test)):
        paths[name] = str(tmp_path / f"{name}.jsonl")
        with open(paths[name], "w", encoding="utf-8") as fh:
            dump_records(recs, fh)
    for source, seed in (("wiki", 1), ("twitter", 2)):
        paths[source] = str(tmp_path / f"{source}.txt")
        write_embeddings(paths[source], make_embeddings(16, seed=seed))
    return paths


def neural_config(files, tmp_path, **kw):
    return ExperimentConfig(
        train_path=files["train"], test_path=files["test"], embedding_path=files["wiki"],
        model="neural", features="text", model_config=TINY, output_dir=str(tmp_path / "out"), **kw,
    )


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(model="svm")
        with pytest.raises(ValueError):
            ExperimentConfig(features="pixels")
        with pytest.raises(ValueError):
            ExperimentConfig(model="neural", features="numerical")

    def test_axis_defaults(self):
        assert ExperimentConfig(model="neural", sweep_axis="learning_rate").axis_values == (
            1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
        assert ExperimentConfig(model="neural", sweep_axis="max_sentences").axis_values == (-1, 1, 2, 3, 4)

    def test_parse(self):
        cfg = parse_config(
            "# comment\n"
            "train_path = a.jsonl\n"
            "model = neural\nfeatures = both  # trailing\n"
            "seed = 7\nlearning_rate = 0.001\nhead_hidden_sizes = 200,100\n"
            "embedding_files = wiki:/x/w.txt, twitter:/x/t.txt\n"
            "sweep_axis = lstm_depth\naxis_values = 1, 3\n"
            "feature_threshold = 0.05\nbalance_per_class = none\n"
        )
        assert cfg.train_path == "a.jsonl" and cfg.seed == 7 and cfg.features == "both"
        assert cfg.model_config.learning_rate == 0.001
        assert cfg.model_config.head_hidden_sizes == (200, 100)
        assert cfg.embedding_files == {"wiki": "/x/w.txt", "twitter": "/x/t.txt"}
        assert cfg.axis_values == (1, 3) and cfg.feature_threshold == 0.05
        assert cfg.balance_per_class is None

    def test_parse_errors(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config("colour = red\n")
        with pytest.raises(ValueError, match="line 2"):
            parse_config("seed = 1\nno equals sign\n")
        with pytest.raises(ValueError, match="follows from 'features'"):
            parse_config("use_numerical_features = true\n")

    def test_stage_seeds(self):
        assert stage_seed(0, "forest") == stage_seed(0, "forest")
        assert stage_seed(0, "forest") != stage_seed(0, "balance")
        assert stage_seed(0, "forest") != stage_seed(1, "forest")


class TestRankAnswers:
    def test_order_and_query(self, monkeypatch):
        (thread,), _ = group_threads(make_records(1, answers_per_thread=(3, 3), seed=0))
        monkeypatch.setattr(harness, "score_records", lambda m, r, e: np.array([0.1, 0.9, 0.5]))
        order, query = rank_answers(None, thread, None)
        ids = [a.a_id for a in thread.answers]
        assert order == [ids[1], ids[2], ids[0]]
        assert sorted(order) == sorted(ids)
        assert query.q_id == thread.q_id and query.scores.tolist() == [0.1, 0.9, 0.5]

    def test_strict_top_gives_rr_one(self):
        train = make_records(40, "score", seed=3)
        test = make_records(5, "score", seed=4, first_q_id=900)
        result = run_on_records(ExperimentConfig(model="gbt", features="numerical", n_estimators=20), train, test)
        (thread, *_), _ = group_threads(test)
        order, query = rank_answers(result.model, thread, result.encoders)
        assert order[0] == thread.accepted.a_id
        assert query.scores.argmax() == query.accepted_index

    def test_feature_mismatch(self):
        train = make_records(40, "score", seed=3)
        result = run_on_records(ExperimentConfig(model="gbt", features="numerical", n_estimators=5), train, train)
        other = run_on_records(ExperimentConfig(model="gbt", features="both", n_estimators=5), train, train)
        (thread, *_), _ = group_threads(train)
        with pytest.raises(ValueError):
            rank_answers(result.model, thread, other.encoders)


class TestRunExperiment:
    def test_gbt_perfect_on_score_fixture(self, files, tmp_path):
        cfg = ExperimentConfig(train_path=files["train"], test_path=files["test"], model="gbt",
                               features="numerical", output_dir=str(tmp_path / "gbt"))
        result = run_experiment(cfg)
        assert result.report.mrr == 1.0 and result.report.ndcg_at_1 == 1.0
        for name in ("report.csv", "run.csv", "mrr_vs_answer_count.csv", "mrr_histogram.csv",
                     "config.json", "encoders.json", "model.json"):
            assert os.path.isfile(tmp_path / "gbt" / name)

    def test_persisted_run_reproduces_report(self, files, tmp_path):
        cfg = ExperimentConfig(train_path=files["train"], test_path=files["test"], model="rf",
                               features="both", n_estimators=10, output_dir=str(tmp_path / "rf"))
        result = run_experiment(cfg)
        with open(tmp_path / "rf" / "run.csv") as fh:
            again = evaluate_queries(read_run_csv(fh.read()))
        for field in ("ndcg_at_1", "ndcg_at_3", "ndcg_at_5", "mrr"):
            assert abs(getattr(again, field) - getattr(result.report, field)) <= 1e-9

    def test_rf_identical_files(self, files, tmp_path):
        outputs = []
        for run in ("a", "b"):
            cfg = ExperimentConfig(train_path=files["train"], test_path=files["test"], model="rf",
                                   features="both", n_estimators=8, seed=3, output_dir=str(tmp_path / run))
            run_experiment(cfg)
            outputs.append({n: (tmp_path / run / n).read_bytes() for n in os.listdir(tmp_path / run)})
        a, b = outputs
        assert set(a) == set(b)
        for name in a:
            if name != "config.json":  # echoes the differing output_dir
                assert a[name] == b[name], name
        assert json.loads(a["config.json"])["seed"] == 3

    def test_text_mode_neural_has_no_numerical_inputs(self, files, tmp_path):
        result = run_experiment(neural_config(files, tmp_path))
        assert result.config["model_config"]["use_numerical_features"] is False
        echo = json.loads((tmp_path / "out" / "config.json").read_text())
        assert echo["model_config"]["use_numerical_features"] is False
        assert os.path.isfile(tmp_path / "out" / "model.npz")

    def test_both_mode_neural_uses_numerical(self, files, tmp_path):
        result = run_experiment(dataclasses.replace(neural_config(files, tmp_path), features="both"))
        assert result.config["model_config"]["use_numerical_features"] is True
        assert result.config["model_config"]["numerical_feature_count"] == 21

    def test_feature_selection(self, files):
        cfg = ExperimentConfig(train_path=files["train"], test_path=files["test"], model="gbt",
                               features="numerical", feature_threshold=0.05, n_estimators=10)
        result = run_experiment(cfg)
        assert "a_score" in result.encoders.feature_columns
        assert len(result.encoders.feature_columns) < 21

    def test_balancing(self, files):
        cfg = ExperimentConfig(train_path=files["train"], test_path=files["test"], model="gbt",
                               features="numerical", balance_per_class=40, n_estimators=5)
        assert run_experiment(cfg).encoders.standardizer is not None

    def test_missing_embedding_file_fails_early(self, files, tmp_path, monkeypatch):
        called = []
        monkeypatch.setattr(harness, "train_model", lambda *a: called.append(1))
        cfg = dataclasses.replace(neural_config(files, tmp_path), embedding_path=str(tmp_path / "nope.txt"))
        with pytest.raises(FileNotFoundError, match="embedding"):
            run_experiment(cfg)
        assert not called

    def test_unparseable_data_fails_early(self, files, tmp_path, monkeypatch):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{oops\n")
        monkeypatch.setattr(harness, "train_model", lambda *a: pytest.fail("trained"))
        with pytest.raises(ValueError, match="line 1"):
            run_experiment(ExperimentConfig(train_path=str(bad), test_path=files["test"]))

    def test_embedding_dimension_checked(self, files, tmp_path):
        cfg = neural_config(files, tmp_path)
        cfg = dataclasses.replace(cfg, model_config=dataclasses.replace(TINY, embedding_dimension=32))
        with pytest.raises(ValueError, match="expected 32 floats"):
            run_experiment(cfg)


class TestSweep:
    def test_rows_and_echo(self, files, tmp_path):
        cfg = dataclasses.replace(neural_config(files, tmp_path), sweep_axis="lstm_depth", axis_values=(1, 2))
        report = run_sweep(cfg)
        assert [r.value for r in report.rows] == [1, 2]
        echoes = [dict(r.config) for r in report.rows]
        depths = [e["model_config"].pop("lstm_depth") for e in echoes]
        assert depths == [1, 2]
        for e in echoes:
            e.pop("output_dir")
        assert echoes[0] == echoes[1]
        lines = (tmp_path / "out" / "sweep_lstm_depth.csv").read_text().splitlines()
        assert lines[0] == "name,NDCG@1,NDCG@3,NDCG@5,MRR" and len(lines) == 3
        assert os.path.isdir(tmp_path / "out" / "lstm_depth=2")

    def test_embedding_source_axis(self, files, tmp_path):
        cfg = dataclasses.replace(
            neural_config(files, tmp_path), sweep_axis="embedding_source",
            embedding_files={"wiki": files["wiki"], "twitter": files["twitter"]},
        )
        report = run_sweep(cfg)
        assert [r.value for r in report.rows] == ["wiki", "twitter"]
        assert report.rows[0].config["embedding_source"] == "wiki"

    def test_in_memory_records(self, tmp_path):
        train = make_records(40, "marker", seed=1)
        test = make_records(10, "marker", seed=2, first_q_id=700)
        table = EmbeddingTable.from_mapping(make_embeddings(16, seed=0), 16)
        cfg = ExperimentConfig(model="neural", features="text", model_config=TINY,
                               sweep_axis="head_depth", axis_values=(0, 3))
        report = run_sweep(cfg, records=(train, test), tables={None: table})
        assert len(report.rows) == 2
        assert report.rows[1].config["model_config"]["head_hidden_sizes"] == [200, 100, 50]

    def test_failing_value_named(self, tmp_path):
        train = make_records(20, "marker", seed=1)
        table = EmbeddingTable.from_mapping(make_embeddings(16, seed=0), 16)
        cfg = ExperimentConfig(model="neural", features="text", model_config=TINY,
                               sweep_axis="lstm_depth", axis_values=(1, 9))
        with pytest.raises(ValueError, match="lstm_depth=9"):
            run_sweep(cfg, records=(train, train), tables={None: table})

    def test_requires_axis_and_neural(self):
        with pytest.raises(ValueError):
            run_sweep(ExperimentConfig(model="neural"))
        with pytest.raises(ValueError, match="neural"):
            run_sweep(ExperimentConfig(model="gbt", sweep_axis="learning_rate"))


class TestEmitReport:
    def test_single_report(self):
        text = emit_report(MetricReport(1, 1, 1, 1, 3))
        assert text == "name,NDCG@1,NDCG@3,NDCG@5,MRR\nrun,1.000000,1.000000,1.000000,1.000000\n"

    def test_named_rows(self):
        text = emit_report([("a", MetricReport(0.5, 0.25, 0.125, 1 / 3, 2))])
        assert text.splitlines()[1] == "a,0.500000,0.250000,0.125000,0.333333"

    def test_markdown(self):
        report = SweepReport("learning_rate", [
            harness.SweepRow(0.1, MetricReport(1, 1, 1, 1, 1), {}, 0.0),
            harness.SweepRow(1e-5, MetricReport(0, 0, 0, 0.5, 1), {}, 0.0),
        ], {})
        lines = emit_report(report, "markdown").splitlines()
        assert len(lines) == 4 and lines[0].startswith("| name |")
        assert lines[2].startswith("| 0.1 |") and lines[3].startswith("| 1e-05 |")

    def test_empty_sweep(self):
        assert emit_report(SweepReport("lstm_depth", [], {})) == "name,NDCG@1,NDCG@3,NDCG@5,MRR\n"

    def test_bad_format(self):
        with pytest.raises(ValueError):
            emit_report([], "html")
