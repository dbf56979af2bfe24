"""From raw answer records to thread groups and engineered features."""

import numpy as np

from cqarank.corpus import balance_training, class_distribution, emit_sql, group_threads
from cqarank.features import FEATURE_NAMES, correlation_table, feature_matrix, select_features
from cqarank.synthetic import make_records

records = make_records(300, "mixed", seed=0)
threads, discarded = group_threads(records)
print(f"{len(records)} records -> {len(threads)} rankable threads ({discarded} records discarded)")
print("accepted / not accepted:", class_distribution(records))

balanced = balance_training(records, 250, seed=0)
print("balanced sample:", class_distribution(balanced))

X = feature_matrix(balanced)
y = np.array([r.a_accepted for r in balanced], dtype=float)
corr = correlation_table(X, y)
print("\nfeature correlations with acceptance:")
for name in FEATURE_NAMES:
    print(f"  {name:28s} {corr[name]:+.3f}")
print("\nselected at |r| > 0.05:", ", ".join(select_features(corr, 0.05)))

print("\nextraction query for accepted answers of 2017:\n")
print(emit_sql(True, 2017, 1000))
