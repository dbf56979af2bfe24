"""The three tree ensembles on the same engineered features."""

from cqarank.harness import ExperimentConfig, emit_report, run_on_records
from cqarank.synthetic import make_records

train = make_records(250, "mixed", seed=1, year=2016)
test = make_records(100, "mixed", seed=2, year=2017, first_q_id=10_000)

rows = []
for model in ("rf", "adaboost", "gbt"):
    for features in ("numerical", "text", "both"):
        result = run_on_records(ExperimentConfig(model=model, features=features, seed=0), train, test)
        rows.append((result.name, result.report))
print(emit_report(rows, format="markdown"))
