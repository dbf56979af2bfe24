"""Ranking metrics on a few hand-made threads.

Shows reciprocal rank, tie-aware NDCG, and the random-ranking reference.
"""

from cqarank.metrics import RankingQuery, evaluate_queries, expected_random_rr, ndcg_at_k, reciprocal_rank

queries = [
    RankingQuery([0, 0, 1], [0.1, 0.2, 0.9]),  # accepted answer ranked first
    RankingQuery([0, 0, 1], [0.0, 1.0, 0.0]),  # accepted answer tied for last
    RankingQuery([1, 0, 0, 0], [0.5, 0.5, 0.5, 0.5]),  # all tied
]

for q in queries:
    print(f"scores={q.scores.tolist()} RR={reciprocal_rank(q):.4f} NDCG@3={ndcg_at_k(q, 3):.4f}")

report = evaluate_queries(queries)
print(f"\nMRR={report.mrr:.4f} NDCG@1={report.ndcg_at_1:.4f} over {report.n_queries} threads")

print("\nexpected RR under random ranking:")
for n in (2, 3, 5, 8):
    print(f"  n={n}: {expected_random_rr(n):.4f}")
