"""Label attention and multi-head self-attention layers.

Inputs are ``n x d_model`` word matrices (one row per word).  The small
functional helpers at the top keep the column convention of the per-head
equations (``K_i`` is ``d_qk x n``) and are used as references in tests.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .nn import FeedForward, LayerNorm, Linear, Module
from .tensor import ShapeError, Tensor

QUERY_MODES = ("vector", "matrix")
COMBINE_MODES = ("concat", "project")


@dataclass
class LabelAttentionConfig:
    num_heads: int
    d_model: int
    d_qk: int = 128
    d_v: int = 128
    d_out: int = 128
    use_pfl: bool = True
    d_ff: int = 256
    residual_dropout_p: float = 0.0
    query_mode: str = "vector"
    combine_mode: str = "concat"

    def __post_init__(self) -> None:
        if self.num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        if min(self.d_model, self.d_qk, self.d_v, self.d_out, self.d_ff) < 1:
            raise ValueError("all widths must be positive")
        if not 0.0 <= self.residual_dropout_p < 1.0:
            raise ValueError("residual_dropout_p must lie in [0, 1)")
        if self.query_mode not in QUERY_MODES:
            raise ValueError(f"query_mode must be one of {QUERY_MODES}")
        if self.combine_mode not in COMBINE_MODES:
            raise ValueError(f"combine_mode must be one of {COMBINE_MODES}")

    @property
    def output_width(self) -> int:
        return self.num_heads * self.d_out if self.combine_mode == "concat" else self.d_model

    @property
    def groups(self) -> int:
        """Number of identifiable head slices in the output rows."""
        return self.num_heads if self.combine_mode == "concat" else 1

    def to_dict(self) -> dict:
        return asdict(self)


class AttentionOutput(NamedTuple):
    word_reps: Tensor
    head_attention: Tensor
    per_head_outputs: Tensor


# -- per-head primitives -------------------------------------------------

def lal_attention_weights(q: Tensor, K: Tensor, d: int) -> Tensor:
    """Distribution of one label query over the ``n`` key columns."""
    q, K = T.as_tensor(q), T.as_tensor(K)
    if q.ndim != 1 or K.ndim != 2 or K.shape[0] != q.shape[0] or d != q.shape[0]:
        raise ShapeError(f"query {q.shape}, keys {K.shape} and d={d} disagree")
    scores = T.matmul(T.reshape(q, (1, -1)), K) / math.sqrt(d)
    return T.reshape(T.softmax(scores, axis=-1), (-1,))


def compute_keys_values(X: Tensor, W_k: Tensor, W_v: Tensor) -> tuple[Tensor, Tensor]:
    """Key and value matrices ``W_k X`` and ``W_v X`` for a ``d_model x n`` input."""
    return T.matmul(W_k, X), T.matmul(W_v, X)


def context_vector(a: Tensor, V: Tensor) -> Tensor:
    """Attention-weighted mixture of the value columns of ``V``."""
    a, V = T.as_tensor(a), T.as_tensor(V)
    if a.ndim != 1 or V.ndim != 2 or V.shape[1] != a.shape[0]:
        raise ShapeError(f"weights {a.shape} do not fit values {V.shape}")
    return T.reshape(T.matmul(V, T.reshape(a, (-1, 1))), (-1,))


# -- layers ----------------------------------------------------------------

class LabelAttention(Module):
    """Label attention layer and its query/combination ablations.

    With ``query_mode="vector"`` each head owns one learned query; with
    ``"matrix"`` every word issues its own query as in self-attention.
    ``combine_mode="concat"`` adds the context to each word's value vector,
    projects and normalises per head and concatenates the heads;
    ``"project"`` mixes the concatenated contexts with one shared matrix,
    then applies the residual and layer norm once for all heads.
    """

    def __init__(self, rng: np.random.Generator, config: LabelAttentionConfig) -> None:
        super().__init__()
        self.config = c = config
        H = c.num_heads
        if c.query_mode == "vector":
            self.add_param("query", T.uniform_init(rng, (H, c.d_qk), c.d_qk))
        else:
            self.add_param("query_weight", T.uniform_init(rng, (H, c.d_model, c.d_qk), c.d_model))
        self.add_param("key_weight", T.uniform_init(rng, (H, c.d_model, c.d_qk), c.d_model))
        self.add_param("value_weight", T.uniform_init(rng, (H, c.d_model, c.d_v), c.d_model))
        if c.combine_mode == "concat":
            self.add_param("out_weight", T.uniform_init(rng, (H, c.d_v, c.d_out), c.d_v))
            self.add_module("head_norm", LayerNorm((H, 1, c.d_out)))
        else:
            self.add_module("proj", Linear(rng, H * c.d_v, c.d_model, bias=False))
            self.add_module("norm", LayerNorm((c.d_model,)))
        if c.use_pfl:
            self.add_module("pfl", FeedForward(rng, c.output_width, c.d_ff))

    def __call__(self, X: Tensor, training: bool = False, rng: np.random.Generator | None = None) -> AttentionOutput:
        c = self.config
        if X.ndim != 2 or X.shape[1] != c.d_model:
            raise ShapeError(f"label attention expects n x {c.d_model} input, got {X.shape}")
        n, H = X.shape[0], c.num_heads
        K = T.matmul(X, self.key_weight)  # H x n x d_qk
        V = T.matmul(X, self.value_weight)  # H x n x d_v
        if c.query_mode == "vector":
            Q = T.reshape(self.query, (H, 1, c.d_qk))
        else:
            Q = T.matmul(X, self.query_weight)
        attn = T.softmax(T.matmul(Q, T.swap_last(K)) / math.sqrt(c.d_qk), axis=-1)
        ctx = T.matmul(attn, V)  # H x 1 x d_v, or H x n x d_v
        head_attention = T.reshape(attn, (H, n)) if c.query_mode == "vector" else attn

        if c.combine_mode == "concat":
            ctx = T.dropout(ctx, c.residual_dropout_p, rng, training)
            heads = self.head_norm(T.matmul(T.add(V, ctx), self.out_weight))  # H x n x d_out
            out = T.reshape(T.transpose(heads, (1, 0, 2)), (n, H * c.d_out))
        else:
            if c.query_mode == "vector":
                ctx = T.add(ctx, np.zeros((H, n, c.d_v)))
            heads = ctx
            mixed = self.proj(T.reshape(T.transpose(ctx, (1, 0, 2)), (n, H * c.d_v)))
            mixed = T.dropout(mixed, c.residual_dropout_p, rng, training)
            out = self.norm(T.add(X, mixed))
        if c.use_pfl:
            out = self.pfl(out)
        return AttentionOutput(out, head_attention, heads)


class SelfAttention(Module):
    """Scaled dot-product multi-head self-attention with residual, layer norm
    and position-wise feed-forward block."""

    def __init__(self, rng: np.random.Generator, d_model: int, num_heads: int, d_ff: int) -> None:
        super().__init__()
        if d_model % num_heads:
            raise ValueError(f"d_model={d_model} is not divisible by {num_heads} heads")
        self.d_model, self.num_heads, self.d_head = d_model, num_heads, d_model // num_heads
        self.add_module("q", Linear(rng, d_model, d_model, bias=False))
        self.add_module("k", Linear(rng, d_model, d_model, bias=False))
        self.add_module("v", Linear(rng, d_model, d_model, bias=False))
        self.add_module("o", Linear(rng, d_model, d_model, bias=False))
        self.add_module("norm", LayerNorm((d_model,)))
        self.add_module("pfl", FeedForward(rng, d_model, d_ff))

    def _split(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return T.transpose(T.reshape(x, (n, self.num_heads, self.d_head)), (1, 0, 2))

    def __call__(self, X: Tensor) -> AttentionOutput:
        if X.ndim != 2 or X.shape[1] != self.d_model:
            raise ShapeError(f"self-attention expects n x {self.d_model} input, got {X.shape}")
        n = X.shape[0]
        Q, K, V = self._split(self.q(X)), self._split(self.k(X)), self._split(self.v(X))
        attn = T.softmax(T.matmul(Q, T.swap_last(K)) / math.sqrt(self.d_head), axis=-1)
        heads = T.matmul(attn, V)
        merged = T.reshape(T.transpose(heads, (1, 0, 2)), (n, self.d_model))
        out = self.pfl(self.norm(T.add(X, self.o(merged))))
        return AttentionOutput(out, attn, heads)


def lal_head_forward(layer: LabelAttention, X: Tensor, head: int) -> Tensor:
    """Output rows of one concat-mode head (``n x d_out``), evaluation mode.

    Computed word by word from the per-head primitives, independently of the
    batched path in ``LabelAttention.__call__``.
    """
    c = layer.config
    if c.combine_mode != "concat" or c.query_mode != "vector":
        raise ValueError("lal_head_forward covers the vector-query, concat-combine layer")
    Xc = T.transpose(X)  # d_model x n
    W_k = T.transpose(layer.key_weight[head])
    W_v = T.transpose(layer.value_weight[head])
    K, V = compute_keys_values(Xc, W_k, W_v)
    a = lal_attention_weights(layer.query[head], K, c.d_qk)
    ctx = context_vector(a, V)
    W_o = T.transpose(layer.out_weight[head])
    gain, bias = layer.head_norm.gain[head, 0], layer.head_norm.bias[head, 0]
    rows = []
    for j in range(X.shape[0]):
        r = T.add(V[:, j], ctx)
        y = T.reshape(T.matmul(W_o, T.reshape(r, (-1, 1))), (-1,))
        rows.append(T.reshape(T.layer_norm(y, gain, bias), (1, -1)))
    return T.concat(rows, axis=0)


def lal_forward(layer: LabelAttention, X: Tensor, training: bool = False, rng=None) -> AttentionOutput:
    return layer(X, training, rng)


def self_attention_forward(layer: SelfAttention, X: Tensor) -> AttentionOutput:
    return layer(X)
