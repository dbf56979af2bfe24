"""A learning-rate sweep of the neural ranker, everything else fixed."""

from cqarank.harness import ExperimentConfig, emit_report, run_sweep
from cqarank.neural import ModelConfig
from cqarank.synthetic import make_embeddings, make_records
from cqarank.vectorize import EmbeddingTable

train = make_records(120, "marker", seed=1, year=2016)
test = make_records(40, "marker", seed=2, year=2017, first_q_id=10_000)
table = EmbeddingTable.from_mapping(make_embeddings(32, seed=1), 32)

config = ExperimentConfig(
    model="neural", features="text", sweep_axis="learning_rate",
    model_config=ModelConfig(embedding_dimension=32, lstm_hidden=16, epochs=3),
)
report = run_sweep(config, records=(train, test), tables={None: table})
print(emit_report(report, format="markdown"))
