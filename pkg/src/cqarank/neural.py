"""Siamese Bi-LSTM answer ranker in plain numpy.

Question and answer token sequences run through two independent stacks of
bidirectional LSTM layers over frozen word embeddings. The final forward and
backward hidden states of each top layer are concatenated, optionally joined
with the numeric predictors, and fed to a dense head ending in one logistic
unit. Backpropagation through time is written out by hand and checked against
central finite differences by :func:`gradient_check`.

Padding is handled with a mask: a padded step leaves the recurrent state
untouched, so results do not depend on how far a sequence was padded.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .vectorize import EmbeddingTable, TokenSequence

__all__ = [
    "HEAD_GRID",
    "ModelConfig",
    "SiameseRanker",
    "AdamState",
    "Batch",
    "init_model",
    "forward",
    "loss",
    "backward",
    "loss_and_gradients",
    "gradient_check",
    "adam_step",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

HEAD_GRID: tuple[tuple[int, ...], ...] = ((), (200,), (200, 100), (200, 100, 50))
CHECKPOINT_VERSION = 1
_P_CLAMP = 1e-7


@dataclass
class ModelConfig:
    embedding_dimension: int = 100
    max_seq_len: int = 100
    lstm_hidden: int = 64
    lstm_depth: int = 1
    head_hidden_sizes: tuple[int, ...] = ()
    dropout_rate: float = 0.25
    use_numerical_features: bool = False
    numerical_feature_count: int = 0
    learning_rate: float = 0.01
    epochs: int = 5
    batch_size: int = 512
    seed: int = 0

    def __post_init__(self):
        self.head_hidden_sizes = tuple(int(s) for s in self.head_hidden_sizes)
        for name in ("embedding_dimension", "max_seq_len", "lstm_hidden", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 1 <= self.lstm_depth <= 4:
            raise ValueError("lstm_depth must lie in [1, 4]")
        if self.head_hidden_sizes not in HEAD_GRID:
            raise ValueError(f"head_hidden_sizes must be one of {HEAD_GRID}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.use_numerical_features and self.numerical_feature_count < 1:
            raise ValueError("numerical_feature_count must be positive when features are used")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @property
    def head_input_size(self) -> int:
        extra = self.numerical_feature_count if self.use_numerical_features else 0
        return 4 * self.lstm_hidden + extra

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head_hidden_sizes"] = list(self.head_hidden_sizes)
        return d


@dataclass
class SiameseRanker:
    config: ModelConfig
    embeddings: EmbeddingTable
    params: dict[str, np.ndarray]

    @property
    def param_names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "SiameseRanker":
        return SiameseRanker(
            copy.deepcopy(self.config),
            self.embeddings,
            {k: v.copy() for k, v in self.params.items()},
        )

    def layer_names(self, branch: str, layer: int, direction: str) -> tuple[str, str, str]:
        prefix = f"{branch}.{layer}.{direction}"
        return f"{prefix}.W", f"{prefix}.U", f"{prefix}.b"

    @property
    def head_layer_count(self) -> int:
        return len(self.config.head_hidden_sizes) + 1


@dataclass
class Batch:
    """Padded id matrices plus lengths for both branches."""

    q_ids: np.ndarray
    q_lengths: np.ndarray
    a_ids: np.ndarray
    a_lengths: np.ndarray
    labels: np.ndarray
    numerical: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.labels)
        for arr in (self.q_ids, self.q_lengths, self.a_ids, self.a_lengths):
            if len(arr) != n:
                raise ValueError("batch components must share one length")
        if self.numerical is not None and len(self.numerical) != n:
            raise ValueError("numerical rows must match batch length")

    @classmethod
    def from_sequences(
        cls,
        questions: Sequence[TokenSequence],
        answers: Sequence[TokenSequence],
        labels: Sequence[float],
        numerical: Optional[np.ndarray] = None,
    ) -> "Batch":
        def stack(seqs):
            if not seqs:
                return np.zeros((0, 1), dtype=np.int64), np.zeros(0, dtype=np.int64)
            return (
                np.vstack([s.ids for s in seqs]).astype(np.int64),
                np.array([s.valid_length for s in seqs], dtype=np.int64),
            )

        q_ids, q_len = stack(questions)
        a_ids, a_len = stack(answers)
        num = None if numerical is None else np.asarray(numerical, dtype=np.float64)
        return cls(q_ids, q_len, a_ids, a_len, np.asarray(labels, dtype=np.float64), num)

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray) -> "Batch":
        return Batch(
            self.q_ids[idx], self.q_lengths[idx], self.a_ids[idx], self.a_lengths[idx],
            self.labels[idx], None if self.numerical is None else self.numerical[idx],
        )


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def create(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p) for k, p in params.items()},
            {k: np.zeros_like(p) for k, p in params.items()},
        )


# -- initialisation ---------------------------------------------------------


def _glorot(rng, shape):
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, size=shape)


def init_model(
    config: ModelConfig, embedding_table: EmbeddingTable, seed: Optional[int] = None
) -> SiameseRanker:
    """Glorot-uniform weights, zero biases except forget gates set to one."""
    if embedding_table.dimension != config.embedding_dimension:
        raise ValueError(
            f"embedding dimension {embedding_table.dimension} does not match "
            f"config.embedding_dimension={config.embedding_dimension}"
        )
    rng = np.random.default_rng(config.seed if seed is None else seed)
    H = config.lstm_hidden
    params: dict[str, np.ndarray] = {}
    for branch in ("q", "a"):
        for layer in range(config.lstm_depth):
            d_in = config.embedding_dimension if layer == 0 else 2 * H
            for direction in ("fwd", "bwd"):
                prefix = f"{branch}.{layer}.{direction}"
                params[prefix + ".W"] = _glorot(rng, (d_in, 4 * H))
                params[prefix + ".U"] = _glorot(rng, (H, 4 * H))
                bias = np.zeros(4 * H)
                bias[H : 2 * H] = 1.0
                params[prefix + ".b"] = bias
    sizes = [config.head_input_size, *config.head_hidden_sizes, 1]
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"head.{i}.W"] = _glorot(rng, (n_in, n_out))
        params[f"head.{i}.b"] = np.zeros(n_out)
    return SiameseRanker(config, embedding_table, params)


# -- recurrences ------------------------------------------------------------


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _lstm_direction(X, lengths, W, U, b, reverse):
    """Run one direction over ``X`` (B, T, D); returns per-step states, final state, cache."""
    B, T, _ = X.shape
    H = U.shape[0]
    dtype = np.result_type(X, W)
    h = np.zeros((B, H), dtype)
    c = np.zeros((B, H), dtype)
    outs = np.zeros((B, T, H), dtype)
    cache = []
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        m = (t < lengths)[:, None]
        a = X[:, t] @ W + h @ U + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        g = np.tanh(a[:, 2 * H : 3 * H])
        o = _sigmoid(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.append((t, m, h, c, i, f, g, o, tc))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        outs[:, t] = h
    return outs, h, cache


def _lstm_direction_backward(d_outs, d_final, X, W, U, cache):
    B, T, D = X.shape
    H = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dX = np.zeros_like(X)
    dh = d_final.copy()
    dc = np.zeros((B, H))
    for t, m, h_prev, c_prev, i, f, g, o, tc in reversed(cache):
        if d_outs is not None:
            dh = dh + d_outs[:, t]
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0) + dh_new * o * (1.0 - tc * tc)
        da = np.concatenate(
            [
                dc_new * g * i * (1.0 - i),
                dc_new * c_prev * f * (1.0 - f),
                dc_new * i * (1.0 - g * g),
                dh_new * tc * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += X[:, t].T @ da
        dU += h_prev.T @ da
        db += da.sum(axis=0)
        dX[:, t] = da @ W.T
        dh = np.where(m, 0.0, dh) + da @ U.T
        dc = np.where(m, 0.0, dc) + dc_new * f
    return dX, dW, dU, db


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _branch_forward(model, branch, ids, lengths, rng):
    cfg = model.config
    steps = int(lengths.max()) if len(lengths) else 0
    x = model.embeddings.vectors[ids[:, :steps]]
    layers = []
    for layer in range(cfg.lstm_depth):
        mask = _dropout_mask(rng, x.shape, cfg.dropout_rate)
        x_in = x if mask is None else x * mask
        per_dir = {}
        for direction in ("fwd", "bwd"):
            W, U, b = (model.params[n] for n in model.layer_names(branch, layer, direction))
            per_dir[direction] = _lstm_direction(x_in, lengths, W, U, b, direction == "bwd")
        layers.append((x_in, mask, per_dir))
        x = np.concatenate([per_dir["fwd"][0], per_dir["bwd"][0]], axis=2)
    top = layers[-1][2]
    summary = np.concatenate([top["fwd"][1], top["bwd"][1]], axis=1)
    return summary, layers


def _branch_backward(model, branch, d_summary, layers, grads):
    H = model.config.lstm_hidden
    d_final = {"fwd": d_summary[:, :H], "bwd": d_summary[:, H:]}
    d_outs = {"fwd": None, "bwd": None}
    for layer in range(len(layers) - 1, -1, -1):
        x_in, mask, per_dir = layers[layer]
        dx = np.zeros_like(x_in)
        for direction in ("fwd", "bwd"):
            names = model.layer_names(branch, layer, direction)
            W, U, _ = (model.params[n] for n in names)
            _, _, cache = per_dir[direction]
            dX, dW, dU, db = _lstm_direction_backward(
                d_outs[direction], d_final[direction], x_in, W, U, cache
            )
            dx += dX
            for n, g in zip(names, (dW, dU, db)):
                grads[n] += g
        if layer == 0:
            break
        if mask is not None:
            dx = dx * mask
        d_outs = {"fwd": dx[:, :, :H], "bwd": dx[:, :, H:]}
        d_final = {"fwd": np.zeros_like(d_final["fwd"]), "bwd": np.zeros_like(d_final["bwd"])}


def _check_batch(model, batch):
    cfg = model.config
    if cfg.use_numerical_features:
        if batch.numerical is None or batch.numerical.shape[1:] != (cfg.numerical_feature_count,):
            raise ValueError(
                f"model expects {cfg.numerical_feature_count} numerical features per row"
            )
    if len(batch) == 0:
        raise ValueError("empty batch")
    vocab = len(model.embeddings)
    for ids in (batch.q_ids, batch.a_ids):
        if ids.size and (ids.min() < 0 or ids.max() >= vocab):
            raise ValueError("token ids outside the embedding table")
    for ids, lengths in ((batch.q_ids, batch.q_lengths), (batch.a_ids, batch.a_lengths)):
        if lengths.size and (lengths.min() < 0 or lengths.max() > ids.shape[1]):
            raise ValueError("sequence lengths exceed padded width")


def _forward_full(model, batch, training, seed):
    _check_batch(model, batch)
    cfg = model.config
    rng = np.random.default_rng(seed) if training and cfg.dropout_rate > 0 else None
    q_sum, q_layers = _branch_forward(model, "q", batch.q_ids, batch.q_lengths, rng)
    a_sum, a_layers = _branch_forward(model, "a", batch.a_ids, batch.a_lengths, rng)
    parts = [q_sum, a_sum]
    if cfg.use_numerical_features:
        parts.append(batch.numerical)
    z = np.concatenate(parts, axis=1)
    activations = [z]
    n_layers = model.head_layer_count
    for i in range(n_layers):
        z = z @ model.params[f"head.{i}.W"] + model.params[f"head.{i}.b"]
        if i < n_layers - 1:
            z = np.tanh(z)
            activations.append(z)
    logit = z[:, 0]
    prob = _sigmoid(logit)
    cache = {"q": q_layers, "a": a_layers, "acts": activations, "split": (q_sum.shape[1], a_sum.shape[1])}
    return prob, cache


def forward(model: SiameseRanker, batch: Batch, training: bool = False, seed: Optional[int] = None) -> np.ndarray:
    """Accepted-answer probability per row; dropout is active only when ``training``."""
    return _forward_full(model, batch, training, seed)[0]


def _bce(p, y):
    p = np.clip(p, _P_CLAMP, 1.0 - _P_CLAMP)
    return -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def loss(probabilities, labels) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7]."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty batch")
    if p.shape != y.shape:
        raise ValueError("probabilities and labels differ in length")
    return float(_bce(p, y))


def loss_and_gradients(
    model: SiameseRanker, batch: Batch, training: bool = False, seed: Optional[int] = None
) -> tuple[float, dict[str, np.ndarray]]:
    prob, cache = _forward_full(model, batch, training, seed)
    y = batch.labels
    B = len(y)
    value = loss(prob, y)
    grads = {k: np.zeros_like(p) for k, p in model.params.items()}

    inside = (prob > _P_CLAMP) & (prob < 1.0 - _P_CLAMP)
    dz = np.where(inside, (prob - y) / B, 0.0)[:, None]
    acts = cache["acts"]
    for i in range(model.head_layer_count - 1, -1, -1):
        W = model.params[f"head.{i}.W"]
        grads[f"head.{i}.W"] += acts[i].T @ dz
        grads[f"head.{i}.b"] += dz.sum(axis=0)
        dz = dz @ W.T
        if i > 0:
            dz = dz * (1.0 - acts[i] ** 2)
    nq, na = cache["split"]
    _branch_backward(model, "q", dz[:, :nq], cache["q"], grads)
    _branch_backward(model, "a", dz[:, nq : nq + na], cache["a"], grads)
    return value, grads


def backward(
    model: SiameseRanker, batch: Batch, seed: Optional[int] = None, training: bool = False
) -> dict[str, np.ndarray]:
    """Analytic gradients of the batch loss for every trainable parameter.

    Uses the dropout masks drawn from ``seed`` when ``training`` is set, so a
    forward call with the same seed sees the same network.
    """
    return loss_and_gradients(model, batch, training, seed)[1]


def gradient_check(
    model: SiameseRanker,
    batch: Batch,
    step: float = 1e-5,
    coords_per_tensor: int = 20,
    seed: int = 0,
    training: bool = False,
    dropout_seed: Optional[int] = None,
    precision: str = "extended",
    details: bool = False,
):
    """Largest relative error between analytic and central-difference gradients.

    ``coords_per_tensor`` coordinates are sampled from each parameter tensor
    (all of them for smaller tensors). Relative error is
    ``|a - n| / max(|a|, |n|, 1e-12)``.

    The analytic side always runs in float64. With ``precision="extended"``
    the perturbed forward passes are evaluated in ``np.longdouble`` so that
    rounding noise (about eps/step) does not swamp coordinates whose gradient
    is close to zero; ``precision="double"`` keeps them in float64 too.
    """
    if precision not in ("extended", "double"):
        raise ValueError("precision must be 'extended' or 'double'")
    _, analytic = loss_and_gradients(model, batch, training, dropout_seed)
    dtype = np.longdouble if precision == "extended" else np.float64
    probe = SiameseRanker(
        model.config,
        EmbeddingTable(model.embeddings.dimension, model.embeddings.index,
                       model.embeddings.vectors.astype(dtype)),
        {k: v.astype(dtype) for k, v in model.params.items()},
    )
    probe_batch = batch if batch.numerical is None else batch.take(np.arange(len(batch)))
    if probe_batch.numerical is not None:
        probe_batch.numerical = probe_batch.numerical.astype(dtype)
    labels = batch.labels.astype(dtype)
    h = dtype(step)

    def objective():
        return _bce(_forward_full(probe, probe_batch, training, dropout_seed)[0], labels)

    rng = np.random.default_rng(seed)
    worst = 0.0
    per_tensor = {}
    for name, param in probe.params.items():
        flat = param.reshape(-1)
        n_pick = min(coords_per_tensor, flat.size)
        picks = rng.choice(flat.size, n_pick, replace=False)
        tensor_worst = 0.0
        for j in picks:
            original = flat[j]
            flat[j] = original + h
            up = objective()
            flat[j] = original - h
            down = objective()
            flat[j] = original
            numeric = float((up - down) / (2 * h))
            a = float(analytic[name].reshape(-1)[j])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            tensor_worst = max(tensor_worst, err)
        per_tensor[name] = tensor_worst
        worst = max(worst, tensor_worst)
    return (worst, per_tensor) if details else worst


def adam_step(
    model: SiameseRanker,
    gradients: dict[str, np.ndarray],
    state: AdamState,
    learning_rate: float,
) -> tuple[SiameseRanker, AdamState]:
    """Bias-corrected Adam update, applied in place in parameter order."""
    for name in model.param_names:
        if gradients[name].shape != model.params[name].shape or state.m[name].shape != model.params[name].shape:
            raise ValueError(f"shape mismatch for parameter {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name in model.param_names:
        g = gradients[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        model.params[name] -= learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return model, state


def train(
    model: SiameseRanker, data: Batch, config: Optional[ModelConfig] = None
) -> tuple[SiameseRanker, list[float]]:
    """Adam over shuffled mini-batches; returns a trained copy and per-epoch mean loss.

    The epoch loss is the size-weighted mean of the mini-batch losses seen
    during that epoch (dropout active).
    """
    cfg = config or model.config
    if len(data) == 0:
        raise ValueError("empty training data")
    model = model.copy()
    state = AdamState.create(model.params)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.epochs)
    trace = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng(seeds[epoch])
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            mini = data.take(idx)
            dropout_seed = int(rng.integers(0, 2**63 - 1))
            value, grads = loss_and_gradients(model, mini, training=True, seed=dropout_seed)
            adam_step(model, grads, state, cfg.learning_rate)
            total += value * len(idx)
        trace.append(total / len(data))
    return model, trace


def save_checkpoint(model: SiameseRanker, path) -> None:
    meta = {"format_version": CHECKPOINT_VERSION, "config": model.config.to_dict(), "order": model.param_names}
    arrays = {f"param:{k}": v for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path, embedding_table: EmbeddingTable) -> SiameseRanker:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')!r}")
        config = ModelConfig(**meta["config"])
        params = {name: data[f"param:{name}"].copy() for name in meta["order"]}
    reference = init_model(config, embedding_table, seed=0)
    if list(params) != reference.param_names:
        raise ValueError("checkpoint parameters do not match the configured architecture")
    for name, value in params.items():
        if value.shape != reference.params[name].shape:
            raise ValueError(f"parameter {name} has shape {value.shape}, expected {reference.params[name].shape}")
    return SiameseRanker(config, embedding_table, params)
