"""Train the Siamese Bi-LSTM ranker on a fixture where a marker word flags the accepted answer."""

from cqarank.harness import ExperimentConfig, emit_report, run_on_records
from cqarank.synthetic import make_embeddings, make_records
from cqarank.vectorize import EmbeddingTable

train = make_records(200, "marker", seed=1, year=2016)
test = make_records(80, "marker", seed=2, year=2017, first_q_id=10_000)
table = EmbeddingTable.from_mapping(make_embeddings(100, seed=1), 100)

result = run_on_records(ExperimentConfig(model="neural", features="text", seed=0), train, test, table)
print("per-epoch training loss:", ", ".join(f"{v:.4f}" for v in result.loss_trace))
print(emit_report([(result.name, result.report)], format="markdown"))
