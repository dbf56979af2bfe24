"""Answer ranking for community question answering threads.

Modules:

- ``corpus``: answer records, validation, thread grouping, balancing, SQL extraction text
- ``textproc``: HTML stripping, tokenization, sentence statistics
- ``features``: the 21 numeric predictors, correlations, selection, standardization
- ``vectorize``: TF-IDF, embedding tables, token-id sequences, OOV reports
- ``metrics``: tie-aware reciprocal rank and NDCG
- ``forest``: CART, random forest, AdaBoost and gradient boosted trees
- ``neural``: numpy Siamese Bi-LSTM ranker with hand-written backpropagation
- ``harness``: experiments, ablation sweeps and reports
"""

__version__ = "0.1.0"
