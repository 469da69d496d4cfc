"""Max-margin training of the aspect model with analytic gradients.

For a positive sentence with unit vector ``z``, unit reconstruction ``r`` and
unit negatives ``z_n``, the loss is ``sum_n max(0, 1 - <z, r> + <z_n, r>)``.
Gradients flow through both L2 normalisations, the aspect softmax, the
pooling and every attention head. With the default attention encoder,
negatives are encoded by the same pathway and receive gradient as well.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aspect_model import AspectModelParams, _attention, softmax, unit
from .corpus import TokenizedCorpus
from .embedding import EmbeddingMatrix
from .errors import ConfigError, TrainingError

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    m_negatives: int = 20
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    ortho_reg: float = 0.0
    negative_encoder: str = "attention"   # or "mean"

    def __post_init__(self):
        if self.m_negatives < 1:
            raise ConfigError(f"m_negatives must be >= 1, got {self.m_negatives}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        # zero is allowed: an epoch then only evaluates the loss
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.ortho_reg < 0:
            raise ConfigError("ortho_reg must be >= 0")
        if self.negative_encoder not in ("attention", "mean"):
            raise ConfigError(f"negative_encoder must be 'attention' or 'mean', got {self.negative_encoder!r}")


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    zero_loss_fraction: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    m_negatives: int = 0
    n_sentences: int = 0

    def epoch_records(self) -> list[dict]:
        """Per-epoch log rows without timing, so logs are reproducible."""
        n_steps = len(self.grad_norm) // max(len(self.epoch_loss), 1)
        return [
            {"epoch": i + 1, "loss": self.epoch_loss[i], "zero_loss_fraction": self.zero_loss_fraction[i],
             "grad_norm_last": self.grad_norm[(i + 1) * n_steps - 1] if n_steps else None}
            for i in range(len(self.epoch_loss))
        ]


def hinge_loss(z: np.ndarray, r: np.ndarray, z_negs: Sequence[np.ndarray]) -> float:
    """Max-margin loss of one positive against its negatives; inputs are unit-normalised first."""
    if len(z_negs) == 0:
        raise ValueError("need at least one negative sample")
    z, r = unit(np.asarray(z, dtype=np.float64))[0], unit(np.asarray(r, dtype=np.float64))[0]
    pos = z @ r
    return float(sum(max(0.0, 1.0 - pos + unit(np.asarray(zn, dtype=np.float64))[0] @ r) for zn in z_negs))


def sample_negatives(corpus: TokenizedCorpus | int, count: int, exclude: int, rng: np.random.Generator) -> list[int]:
    """``count`` distinct indices other than ``exclude``, uniform without replacement."""
    n = corpus if isinstance(corpus, int) else len(corpus)
    if n < count + 1:
        raise ValueError(f"corpus of {n} sentences cannot supply {count} negatives")
    picks = rng.choice(n - 1, size=count, replace=False)
    return [int(j) if j < exclude else int(j) + 1 for j in picks]


# ---------------------------------------------------------------- gradients


def _zero_grads(params: AspectModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(a) for name, a in params.blocks().items()}


def _encode(e: np.ndarray, params: AspectModelParams):
    context, cache = _attention(e, params)
    z = (e * context).mean(axis=0)
    zhat, norm = unit(z)
    return zhat, (e, cache, zhat, norm)


def _encode_backward(g_zhat: np.ndarray, state, params: AspectModelParams, grads: dict) -> None:
    e, (q, k, v, attn, concat), zhat, norm = state
    if norm == 0.0:
        return
    n = e.shape[0]
    h, dk = params.heads, params.head_dim
    dz = (g_zhat - zhat * (zhat @ g_zhat)) / norm
    d_context = e * dz[None, :] / n
    grads["wo"] += concat.T @ d_context
    d_heads = (d_context @ params.wo.T).reshape(n, h, dk).transpose(1, 0, 2)
    d_attn = d_heads @ v.transpose(0, 2, 1)
    dv = attn.transpose(0, 2, 1) @ d_heads
    d_scores = attn * (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True)) / np.sqrt(dk)
    dq = d_scores @ k
    dkey = d_scores.transpose(0, 2, 1) @ q
    grads["wq"] += np.einsum("nd,hnk->hdk", e, dq)
    grads["wk"] += np.einsum("nd,hnk->hdk", e, dkey)
    grads["wv"] += np.einsum("nd,hnk->hdk", e, dv)


def ortho_penalty(ec: np.ndarray, weight: float) -> tuple[float, np.ndarray]:
    """``weight * ||N N^T - I||_F^2`` for row-normalised ``ec`` and its gradient."""
    norms = np.linalg.norm(ec, axis=1, keepdims=True)
    nrm = ec / norms
    gram = nrm @ nrm.T - np.eye(len(ec))
    d_nrm = 4.0 * weight * gram @ nrm
    d_ec = (d_nrm - nrm * (nrm * d_nrm).sum(axis=1, keepdims=True)) / norms
    return float(weight * (gram ** 2).sum()), d_ec


@dataclass
class BatchResult:
    loss: float
    grads: dict[str, np.ndarray]
    per_sentence: list[float]
    zero_triplets: int
    triplets: int


def batch_loss_and_grads(params: AspectModelParams, blocks: Sequence[np.ndarray], positives: Sequence[int],
                         negatives: Sequence[Sequence[int]], ortho_reg: float = 0.0,
                         negative_encoder: str = "attention") -> BatchResult:
    """Mean max-margin loss over ``positives`` and its gradient for every parameter block.

    ``blocks[s]`` is the ``n_s x d`` embedding block of sentence ``s``;
    ``negatives[b]`` lists the negative sentence indices for ``positives[b]``.
    """
    grads = _zero_grads(params)
    pos_state = {s: _encode(blocks[s], params) for s in dict.fromkeys(positives)}
    if negative_encoder == "attention":
        neg_state = {}
        for s in dict.fromkeys(n for negs in negatives for n in negs):
            neg_state[s] = pos_state[s] if s in pos_state else _encode(blocks[s], params)
        neg_vec = {s: st[0] for s, st in neg_state.items()}
    else:
        neg_vec = {s: unit(blocks[s].mean(axis=0))[0] for negs in negatives for s in negs}
        neg_state = {}

    g_pos = {s: np.zeros(params.dim) for s in pos_state}
    g_neg = {s: np.zeros(params.dim) for s in neg_state}
    total, zero, triplets = 0.0, 0, 0
    per_sentence = []
    for i, negs in zip(positives, negatives):
        zi = pos_state[i][0]
        p = softmax(params.wp.T @ zi)
        r = params.ec.T @ p
        rhat, rnorm = unit(r)
        pos_score = zi @ rhat
        g_rhat = np.zeros(params.dim)
        loss_i = 0.0
        for n in negs:
            zn = neg_vec[n]
            margin = 1.0 - pos_score + zn @ rhat
            triplets += 1
            if margin > 0.0:
                loss_i += margin
                g_pos[i] -= rhat
                g_rhat += zn - zi
                if n in g_neg:
                    g_neg[n] += rhat
            else:
                zero += 1
        per_sentence.append(loss_i)
        total += loss_i
        if rnorm > 0.0:
            dr = (g_rhat - rhat * (rhat @ g_rhat)) / rnorm
            grads["ec"] += np.outer(p, dr)
            dp = params.ec @ dr
            d_logits = p * (dp - p @ dp)
            grads["wp"] += np.outer(zi, d_logits)
            g_pos[i] += params.wp @ d_logits

    # positives and negatives may share a sentence; its gradients simply add
    g_total = dict(g_pos)
    for s, g in g_neg.items():
        g_total[s] = g_total[s] + g if s in g_total else g
    for s, g in g_total.items():
        _, state = pos_state[s] if s in pos_state else neg_state[s]
        _encode_backward(g, state, params, grads)

    scale = 1.0 / len(positives)
    for g in grads.values():
        g *= scale
    loss = total * scale
    if ortho_reg > 0.0:
        penalty, d_ec = ortho_penalty(params.ec, ortho_reg)
        loss += penalty
        grads["ec"] += d_ec
    return BatchResult(loss, grads, per_sentence, zero, triplets)


# ---------------------------------------------------------------- optimisation


class Adam:
    def __init__(self, params: AspectModelParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = _zero_grads(params)
        self.v = _zero_grads(params)
        self.t = 0

    def step(self, params: AspectModelParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)
            getattr(params, name)[...] -= update


class SGD:
    def __init__(self, params: AspectModelParams, lr: float):
        self.lr = lr

    def step(self, params: AspectModelParams, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            getattr(params, name)[...] -= self.lr * g


def sentence_blocks(corpus: TokenizedCorpus, embeddings: EmbeddingMatrix | np.ndarray):
    """Embedding blocks for sentences with at least one in-vocabulary token, plus their corpus indices."""
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    index, blocks = [], []
    for s in range(len(corpus)):
        ids = corpus.content(s)
        if ids:
            index.append(s)
            blocks.append(vectors[ids])
    return index, blocks


def _check_params(params: AspectModelParams, when: str) -> None:
    for name, a in params.blocks().items():
        if not np.all(np.isfinite(a)):
            raise TrainingError(f"non-finite values in parameter block {name!r} {when}")


def _check_finite(loss: float, grads: dict[str, np.ndarray]) -> None:
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter block {name!r}")


def train(model: AspectModelParams, corpus: TokenizedCorpus, embeddings: EmbeddingMatrix | np.ndarray,
          config: TrainConfig) -> tuple[AspectModelParams, TrainReport]:
    params = model.copy()
    vectors = embeddings.vectors if isinstance(embeddings, EmbeddingMatrix) else np.asarray(embeddings)
    if vectors.shape[1] != params.dim:
        raise ConfigError(f"embedding dim {vectors.shape[1]} does not match model dim {params.dim}")
    _, blocks = sentence_blocks(corpus, vectors)
    n = len(blocks)
    if n < 2:
        raise ConfigError(f"need at least 2 non-empty sentences to sample negatives, got {n}")
    m = config.m_negatives
    if n < m + 1:
        log.warning("only %d sentences; using %d negatives instead of %d", n, n - 1, m)
        m = n - 1

    _check_params(params, "before training")
    rng = np.random.default_rng(config.seed)
    if config.optimizer == "adam":
        opt = Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    else:
        opt = SGD(params, config.learning_rate)

    report = TrainReport(m_negatives=m, n_sentences=n)
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        losses, zero, trip = [], 0, 0
        for start in range(0, n, config.batch_size):
            batch = [int(i) for i in order[start:start + config.batch_size]]
            negs = [sample_negatives(n, m, i, rng) for i in batch]
            res = batch_loss_and_grads(params, blocks, batch, negs, config.ortho_reg, config.negative_encoder)
            _check_finite(res.loss, res.grads)
            opt.step(params, res.grads)
            _check_params(params, f"after an update in epoch {epoch + 1}")
            losses.extend(res.per_sentence)
            zero += res.zero_triplets
            trip += res.triplets
            report.grad_norm.append(float(np.sqrt(sum((g ** 2).sum() for g in res.grads.values()))))
        report.epoch_loss.append(float(np.mean(losses)))
        report.zero_loss_fraction.append(zero / trip)
        report.epoch_seconds.append(time.perf_counter() - started)
        log.info("train epoch %d/%d loss %.4f zero-loss %.3f", epoch + 1, config.epochs,
                 report.epoch_loss[-1], report.zero_loss_fraction[-1])
    return params, report


def predict(params: AspectModelParams, blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Aspect distribution for each sentence block, shape (n_sentences, K)."""
    out = np.empty((len(blocks), params.k_aspects))
    for s, e in enumerate(blocks):
        zhat, _ = _encode(e, params)
        out[s] = softmax(params.wp.T @ zhat)
    return out
