"""Forward pass of the attention aspect model.

A sentence is the ``n x d`` block of its word vectors. Multi-head scaled
dot-product self-attention (no biases, no positional terms) yields a context
matrix; the sentence vector is the token-wise product of embeddings and
context, mean-pooled. Its unit-normalised form is mapped to a softmax over K
aspects, and the reconstruction is the matching mixture of aspect rows.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MODEL_MAGIC = b"MUSCAD-MODEL-v1\n"
_BLOCKS = ("wq", "wk", "wv", "wo", "wp", "ec")


@dataclass
class AspectModelParams:
    wq: np.ndarray   # (h, d, d_k)
    wk: np.ndarray   # (h, d, d_k)
    wv: np.ndarray   # (h, d, d_k)
    wo: np.ndarray   # (h * d_k, d)
    wp: np.ndarray   # (d, K)
    ec: np.ndarray   # (K, d)

    def __post_init__(self):
        h, d, dk = self.wq.shape
        if self.wk.shape != (h, d, dk) or self.wv.shape != (h, d, dk):
            raise ConfigError("query/key/value projections must share shape (h, d, d_k)")
        if h * dk != d:
            raise ConfigError(f"d={d} is not heads*head_dim ({h}*{dk})")
        if self.wo.shape != (h * dk, d):
            raise ConfigError(f"wo must be {(h * dk, d)}, got {self.wo.shape}")
        k = self.ec.shape[0]
        if self.ec.shape != (k, d) or self.wp.shape != (d, k):
            raise ConfigError("wp must be (d, K) and ec must be (K, d)")

    @property
    def heads(self) -> int:
        return self.wq.shape[0]

    @property
    def dim(self) -> int:
        return self.wq.shape[1]

    @property
    def head_dim(self) -> int:
        return self.wq.shape[2]

    @property
    def k_aspects(self) -> int:
        return self.ec.shape[0]

    def blocks(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _BLOCKS}

    def copy(self) -> "AspectModelParams":
        return AspectModelParams(**{n: a.copy() for n, a in self.blocks().items()})

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.blocks().values())


def init_params(dim: int, heads: int, aspect_matrix: np.ndarray, seed: int = 0) -> AspectModelParams:
    """Xavier-uniform projections; the aspect matrix is taken as given."""
    if heads < 1 or dim % heads:
        raise ConfigError(f"d={dim} must be divisible by heads={heads}")
    aspect_matrix = np.asarray(aspect_matrix, dtype=np.float64)
    k = aspect_matrix.shape[0]
    if aspect_matrix.shape != (k, dim):
        raise ConfigError(f"aspect matrix must be (K, {dim}), got {aspect_matrix.shape}")
    rng = np.random.default_rng(seed)
    dk = dim // heads

    def xavier(shape, fan_in, fan_out):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    return AspectModelParams(
        wq=xavier((heads, dim, dk), dim, dk),
        wk=xavier((heads, dim, dk), dim, dk),
        wv=xavier((heads, dim, dk), dim, dk),
        wo=xavier((heads * dk, dim), heads * dk, dim),
        wp=xavier((dim, k), dim, k),
        ec=aspect_matrix.copy(),
    )


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class ForwardTrace:
    attention_weights: np.ndarray  # (h, n, n)
    context: np.ndarray            # (n, d)
    sentence_vec: np.ndarray       # z, (d,)
    aspect_probs: np.ndarray       # p_t, (K,)
    reconstruction: np.ndarray     # r, (d,)


def _attention(e: np.ndarray, params: AspectModelParams):
    if e.ndim != 2 or e.shape[1] != params.dim:
        raise ValueError(f"sentence block must be (n, {params.dim}), got {e.shape}")
    if e.shape[0] < 1:
        raise ValueError("sentence has no tokens")
    q = np.einsum("nd,hdk->hnk", e, params.wq)
    k = np.einsum("nd,hdk->hnk", e, params.wk)
    v = np.einsum("nd,hdk->hnk", e, params.wv)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(params.head_dim)
    attn = softmax(scores, axis=-1)
    heads = attn @ v                                   # (h, n, d_k)
    concat = heads.transpose(1, 0, 2).reshape(e.shape[0], -1)
    return concat @ params.wo, (q, k, v, attn, concat)


def multi_head_attention(e: np.ndarray, params: AspectModelParams) -> np.ndarray:
    return _attention(np.asarray(e, dtype=np.float64), params)[0]


def attention_weights(e: np.ndarray, params: AspectModelParams) -> np.ndarray:
    return _attention(np.asarray(e, dtype=np.float64), params)[1][3]


def sentence_representation(e: np.ndarray, context: np.ndarray) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    if e.shape != np.shape(context):
        raise ValueError(f"embedding block {e.shape} and context {np.shape(context)} differ")
    if e.shape[0] == 0:
        raise ValueError("sentence has no tokens")
    return (e * context).mean(axis=0)


def aspect_forward(z: np.ndarray, params: AspectModelParams) -> tuple[np.ndarray, np.ndarray]:
    p = softmax(params.wp.T @ z)
    return p, params.ec.T @ p


def unit(x: np.ndarray) -> tuple[np.ndarray, float]:
    norm = float(np.linalg.norm(x))
    if norm == 0.0:
        return np.zeros_like(x), 0.0
    return x / norm, norm


def forward(e: np.ndarray, params: AspectModelParams) -> ForwardTrace:
    """Full pass for one sentence. The aspect softmax reads the unit-norm sentence vector."""
    e = np.asarray(e, dtype=np.float64)
    context, (_, _, _, attn, _) = _attention(e, params)
    z = sentence_representation(e, context)
    p, r = aspect_forward(unit(z)[0], params)
    return ForwardTrace(attn, context, z, p, r)


# ---------------------------------------------------------------- persistence


def dump_model(params: AspectModelParams) -> bytes:
    header = json.dumps({"dim": params.dim, "heads": params.heads, "head_dim": params.head_dim,
                         "k_aspects": params.k_aspects, "blocks": list(_BLOCKS)}).encode()
    body = b"".join(np.ascontiguousarray(getattr(params, n), dtype="<f8").tobytes() for n in _BLOCKS)
    return MODEL_MAGIC + header + b"\n" + body


def load_model(blob: bytes) -> AspectModelParams:
    if not blob.startswith(MODEL_MAGIC):
        raise ValueError("not a model snapshot")
    rest = blob[len(MODEL_MAGIC):]
    nl = rest.index(b"\n")
    meta = json.loads(rest[:nl])
    d, h, dk, k = meta["dim"], meta["heads"], meta["head_dim"], meta["k_aspects"]
    shapes = {"wq": (h, d, dk), "wk": (h, d, dk), "wv": (h, d, dk), "wo": (h * dk, d), "wp": (d, k), "ec": (k, d)}
    data = np.frombuffer(rest[nl + 1:], dtype="<f8")
    arrays, offset = {}, 0
    for name in meta["blocks"]:
        size = int(np.prod(shapes[name]))
        arrays[name] = data[offset:offset + size].reshape(shapes[name]).copy()
        offset += size
    if offset != data.size:
        raise ValueError("model snapshot has trailing or missing data")
    return AspectModelParams(**arrays)
