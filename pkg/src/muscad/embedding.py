"""CBOW word embeddings trained with negative sampling (or a full softmax)."""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import TokenizedCorpus, Vocabulary
from .errors import ConfigError, EmptyCorpusError

log = logging.getLogger(__name__)

EMB_MAGIC = b"MUSCAD-EMB-v1\n"


@dataclass
class CbowConfig:
    dim: int = 200
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_lr: float = 0.0001
    seed: int = 0
    noise_power: float = 0.75
    full_softmax: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.negatives < 1:
            raise ConfigError(f"negatives must be >= 1, got {self.negatives}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate > self.min_lr >= 0:
            raise ConfigError("need learning_rate > min_lr >= 0")


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    trained_epochs: int = 0
    seed: int = 0
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[1] < 2:
            raise ValueError(f"embedding matrix must be |V| x d with d >= 2, got shape {self.vectors.shape}")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]


def average_context(embeddings: EmbeddingMatrix | np.ndarray, context_ids: Sequence[int]) -> np.ndarray:
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else embeddings
    if len(context_ids) == 0:
        raise ValueError("context is empty")
    return vectors[np.asarray(context_ids)].mean(axis=0)


# ---------------------------------------------------------------- objectives
# Both objectives return the loss and dense gradients for one (context, center)
# example; training only touches the rows that are non-zero.


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def ns_loss(w_in, w_out, context, center, negatives) -> float:
    h = w_in[list(context)].mean(axis=0)
    pos = w_out[center] @ h
    neg = w_out[list(negatives)] @ h
    return float(-_log_sigmoid(pos) - _log_sigmoid(-neg).sum())


def ns_grads(w_in, w_out, context, center, negatives):
    context = list(context)
    targets = np.array([center, *negatives])
    labels = np.zeros(len(targets))
    labels[0] = 1.0
    h = w_in[context].mean(axis=0)
    scores = w_out[targets] @ h
    g = 1.0 / (1.0 + np.exp(-scores)) - labels
    g_out = np.zeros_like(w_out)
    np.add.at(g_out, targets, np.outer(g, h))
    g_h = g @ w_out[targets]
    g_in = np.zeros_like(w_in)
    np.add.at(g_in, context, np.broadcast_to(g_h / len(context), (len(context), w_in.shape[1])))
    loss = float(-_log_sigmoid(scores[0]) - _log_sigmoid(-scores[1:]).sum())
    return loss, g_in, g_out


def softmax_loss(w_in, w_out, context, center) -> float:
    h = w_in[list(context)].mean(axis=0)
    scores = w_out @ h
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()) - scores[center])


def softmax_grads(w_in, w_out, context, center):
    context = list(context)
    h = w_in[context].mean(axis=0)
    scores = w_out @ h
    p = np.exp(scores - scores.max())
    p /= p.sum()
    loss = float(-np.log(p[center]))
    p[center] -= 1.0
    g_out = np.outer(p, h)
    g_h = w_out.T @ p
    g_in = np.zeros_like(w_in)
    np.add.at(g_in, context, np.broadcast_to(g_h / len(context), (len(context), w_in.shape[1])))
    return loss, g_in, g_out


# ---------------------------------------------------------------- training


def _examples(corpus: TokenizedCorpus, window: int):
    for s in range(len(corpus)):
        ids = corpus.content(s)
        for t, center in enumerate(ids):
            context = ids[max(0, t - window):t] + ids[t + 1:t + 1 + window]
            if context:
                yield context, center


def train_cbow(corpus: TokenizedCorpus, vocab: Vocabulary, config: CbowConfig) -> EmbeddingMatrix:
    n_vocab = len(vocab)
    if not config.full_softmax and n_vocab < config.negatives + 1:
        raise ConfigError(f"vocabulary of {n_vocab} words is too small for {config.negatives} negatives")
    examples = list(_examples(corpus, config.window))
    if not examples:
        raise EmptyCorpusError("no training windows: every sentence has fewer than two in-vocabulary tokens")

    rng = np.random.default_rng(config.seed)
    d = config.dim
    w_in = (rng.random((n_vocab, d)) - 0.5) / d
    w_out = np.zeros((n_vocab, d))

    noise = np.asarray(vocab.frequency, dtype=np.float64) ** config.noise_power
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    total_steps = config.epochs * len(examples)
    step = 0
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for idx in order:
            context, center = examples[idx]
            lr = config.learning_rate - (config.learning_rate - config.min_lr) * step / total_steps
            step += 1
            h = w_in[context].mean(axis=0)
            if config.full_softmax:
                scores = w_out @ h
                p = np.exp(scores - scores.max())
                p /= p.sum()
                epoch_loss -= np.log(p[center])
                p[center] -= 1.0
                g_h = w_out.T @ p
                w_out -= lr * np.outer(p, h)
            else:
                negs = np.searchsorted(noise_cdf, rng.random(config.negatives), side="right")
                negs = negs[negs != center]
                targets = np.concatenate(([center], negs))
                rows = w_out[targets]
                scores = rows @ h
                labels = np.zeros(len(targets))
                labels[0] = 1.0
                g = 1.0 / (1.0 + np.exp(-scores)) - labels
                epoch_loss += -_log_sigmoid(scores[0]) - _log_sigmoid(-scores[1:]).sum()
                g_h = g @ rows
                np.add.at(w_out, targets, -lr * np.outer(g, h))
            np.add.at(w_in, context, -lr * g_h / len(context))
        losses.append(float(epoch_loss / len(examples)))
        log.info("cbow epoch %d/%d loss %.5f", epoch + 1, config.epochs, losses[-1])

    return EmbeddingMatrix(w_in, trained_epochs=config.epochs, seed=config.seed, losses=losses)


# ---------------------------------------------------------------- persistence


def dump_text(embeddings: EmbeddingMatrix, tokens: Sequence[str]) -> str:
    vectors = embeddings.vectors
    if len(tokens) != vectors.shape[0]:
        raise ValueError("token list does not match embedding rows")
    out = io.StringIO()
    out.write(f"{vectors.shape[0]} {vectors.shape[1]}\n")
    for tok, row in zip(tokens, vectors):
        out.write(tok + " " + " ".join(f"{x:.17g}" for x in row) + "\n")
    return out.getvalue()


def load_text(text: str, vocab: Vocabulary | None = None) -> tuple[list[str], EmbeddingMatrix]:
    """Parse the text format; with ``vocab`` the rows are reordered to vocabulary ids."""
    lines = text.splitlines()
    n, d = (int(x) for x in lines[0].split())
    tokens, rows = [], []
    for line in lines[1:n + 1]:
        parts = line.rstrip().split(" ")
        tokens.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    vectors = np.array(rows, dtype=np.float64).reshape(n, d)
    if vocab is not None:
        index = {t: i for i, t in enumerate(tokens)}
        missing = [t for t in vocab.id_to_token if t not in index]
        if missing:
            raise ValueError(f"{len(missing)} vocabulary tokens have no embedding, e.g. {missing[:3]}")
        vectors = vectors[[index[t] for t in vocab.id_to_token]]
        tokens = list(vocab.id_to_token)
    return tokens, EmbeddingMatrix(vectors)


def dump_binary(embeddings: EmbeddingMatrix, tokens: Sequence[str]) -> bytes:
    header = json.dumps({"rows": len(embeddings), "dim": embeddings.dim, "tokens": list(tokens),
                         "trained_epochs": embeddings.trained_epochs, "seed": embeddings.seed},
                        ensure_ascii=False).encode("utf-8")
    return EMB_MAGIC + header + b"\n" + np.ascontiguousarray(embeddings.vectors, dtype="<f8").tobytes()


def load_binary(blob: bytes) -> tuple[list[str], EmbeddingMatrix]:
    if not blob.startswith(EMB_MAGIC):
        raise ValueError("not an embedding snapshot")
    rest = blob[len(EMB_MAGIC):]
    nl = rest.index(b"\n")
    meta = json.loads(rest[:nl])
    vectors = np.frombuffer(rest[nl + 1:], dtype="<f8").reshape(meta["rows"], meta["dim"]).copy()
    return meta["tokens"], EmbeddingMatrix(vectors, meta["trained_epochs"], meta["seed"])
