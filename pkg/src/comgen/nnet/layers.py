"""Attention building blocks shared by the encoder/decoder stacks."""

from __future__ import annotations

import numpy as np

from comgen.nnet import tensor as T


def xavier(rng, shape):
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def rel_index(i, j, k):
    """Table slot for the clipped relative offset j - i: clip(j-i, k) + k."""
    if k < 1:
        raise ValueError("max relative distance k must be >= 1")
    d = j - i
    return max(-k, min(k, d)) + k


def rel_index_matrix(lq, lk, k):
    """(lq, lk) int64 matrix of clipped-offset table slots."""
    j = np.arange(lk)[None, :]
    i = np.arange(lq)[:, None]
    return (np.clip(j - i, -k, k) + k).astype(np.int64)


class RelPosTable:
    """Learnable key/value vectors indexed by clipped relative offset."""

    def __init__(self, rng, k, d_head, name):
        self.k = k
        self.w_key = T.parameter(xavier(rng, (2 * k + 1, d_head)), name=f"{name}.w_key")
        self.w_value = T.parameter(xavier(rng, (2 * k + 1, d_head)), name=f"{name}.w_value")

    def params(self):
        return [self.w_key, self.w_value]


def scaled_attention(q, k, v, valid=None, rel=None, idx=None):
    """softmax(QK^T / sqrt(d_k)) V with optional masking and relative offsets.

    q/k/v: Tensors shaped (..., L, d). With ``rel`` (a RelPosTable) the inputs
    must be 4-D (batch, heads, L, d); the clipped-offset key vectors are added
    to the scores and the offset value vectors join the weighted sum.
    Returns (output, attention_weights).
    """
    d_k = q.shape[-1]
    if k.shape[-1] != d_k or v.shape[-2] != k.shape[-2]:
        raise ValueError(f"attention shape mismatch: q{tuple(q.shape)} "
                         f"k{tuple(k.shape)} v{tuple(v.shape)}")
    scores = T.scale(T.matmul(q, T.transpose(k, _swap_last(k))), 1.0 / np.sqrt(d_k))
    if rel is not None:
        if idx is None:
            idx = rel_index_matrix(q.shape[-2], k.shape[-2], rel.k)
        rel_term = T.scale(T.rel_scores(q, rel.w_key, idx), 1.0 / np.sqrt(d_k))
        scores = T.add(scores, rel_term)
    attn = T.masked_softmax(scores, valid)
    out = T.matmul(attn, v)
    if rel is not None:
        out = T.add(out, T.rel_values(attn, rel.w_value, idx))
    return out, attn


def _swap_last(t):
    n = len(t.shape)
    axes = list(range(n))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return axes


class Linear:
    def __init__(self, rng, d_in, d_out, name, bias=True):
        self.w = T.parameter(xavier(rng, (d_in, d_out)), name=f"{name}.w")
        self.b = T.parameter(np.zeros(d_out), name=f"{name}.b") if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.w)
        if self.b is not None:
            y = T.add(y, self.b)
        return y

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])


class MultiHeadAttention:
    """h parallel scaled-attention heads on learned projections, merged by W^O."""

    def __init__(self, rng, d_model, heads, name, rel_k=0):
        self.heads = heads
        self.d_model = d_model
        self.d_head = d_model // heads
        self.wq = Linear(rng, d_model, d_model, f"{name}.wq", bias=False)
        self.wk = Linear(rng, d_model, d_model, f"{name}.wk", bias=False)
        self.wv = Linear(rng, d_model, d_model, f"{name}.wv", bias=False)
        self.wo = Linear(rng, d_model, d_model, f"{name}.wo", bias=False)
        self.rel = RelPosTable(rng, rel_k, self.d_head, f"{name}.rel") if rel_k else None

    def _split(self, x):
        b, l, _ = x.shape
        return T.transpose(T.reshape(x, (b, l, self.heads, self.d_head)), (0, 2, 1, 3))

    def __call__(self, x_q, x_kv, valid_keys=None, causal=False):
        """valid_keys: (B, Lk) bool for usable key positions; causal masks j > i."""
        b, lq, _ = x_q.shape
        lk = x_kv.shape[1]
        q = self._split(self.wq(x_q))
        k = self._split(self.wk(x_kv))
        v = self._split(self.wv(x_kv))
        valid = None
        if valid_keys is not None:
            valid = valid_keys[:, None, None, :]
        if causal:
            tri = np.tril(np.ones((lq, lk), dtype=bool))[None, None, :, :]
            valid = tri if valid is None else (valid & tri)
        out, _ = scaled_attention(q, k, v, valid=valid, rel=self.rel)
        merged = T.reshape(T.transpose(out, (0, 2, 1, 3)), (b, lq, self.d_model))
        return self.wo(merged)

    def params(self):
        ps = self.wq.params() + self.wk.params() + self.wv.params() + self.wo.params()
        if self.rel is not None:
            ps += self.rel.params()
        return ps


class LayerNorm:
    def __init__(self, d, name):
        self.gamma = T.parameter(np.ones(d), name=f"{name}.gamma")
        self.beta = T.parameter(np.zeros(d), name=f"{name}.beta")

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)

    def params(self):
        return [self.gamma, self.beta]


class FeedForward:
    def __init__(self, rng, d_model, d_ff, name):
        self.lin1 = Linear(rng, d_model, d_ff, f"{name}.lin1")
        self.lin2 = Linear(rng, d_ff, d_model, f"{name}.lin2")

    def __call__(self, x):
        return self.lin2(T.relu(self.lin1(x)))

    def params(self):
        return self.lin1.params() + self.lin2.params()


class EncoderLayer:
    """Self-attention then position-wise feed-forward, each sub-layer wrapped
    in dropout -> residual -> layer norm (post-norm)."""

    def __init__(self, rng, d_model, heads, d_ff, rel_k, name):
        self.attn = MultiHeadAttention(rng, d_model, heads, f"{name}.attn", rel_k=rel_k)
        self.norm1 = LayerNorm(d_model, f"{name}.norm1")
        self.ffn = FeedForward(rng, d_model, d_ff, f"{name}.ffn")
        self.norm2 = LayerNorm(d_model, f"{name}.norm2")

    def __call__(self, x, valid, p_drop, rng, training):
        a = self.attn(x, x, valid_keys=valid)
        x = self.norm1(T.add(x, T.dropout(a, p_drop, rng, training)))
        f = self.ffn(x)
        return self.norm2(T.add(x, T.dropout(f, p_drop, rng, training)))

    def params(self):
        return (self.attn.params() + self.norm1.params()
                + self.ffn.params() + self.norm2.params())


class DecoderLayer:
    """Causal self-attention, cross-attention over the fused memory, then
    feed-forward; post-norm like the encoder."""

    def __init__(self, rng, d_model, heads, d_ff, rel_k, name):
        self.self_attn = MultiHeadAttention(rng, d_model, heads, f"{name}.self", rel_k=rel_k)
        self.norm1 = LayerNorm(d_model, f"{name}.norm1")
        self.cross_attn = MultiHeadAttention(rng, d_model, heads, f"{name}.cross")
        self.norm2 = LayerNorm(d_model, f"{name}.norm2")
        self.ffn = FeedForward(rng, d_model, d_ff, f"{name}.ffn")
        self.norm3 = LayerNorm(d_model, f"{name}.norm3")

    def __call__(self, x, self_valid, memory, mem_valid, p_drop, rng, training):
        a = self.self_attn(x, x, valid_keys=self_valid, causal=True)
        x = self.norm1(T.add(x, T.dropout(a, p_drop, rng, training)))
        c = self.cross_attn(x, memory, valid_keys=mem_valid)
        x = self.norm2(T.add(x, T.dropout(c, p_drop, rng, training)))
        f = self.ffn(x)
        return self.norm3(T.add(x, T.dropout(f, p_drop, rng, training)))

    def params(self):
        return (self.self_attn.params() + self.norm1.params()
                + self.cross_attn.params() + self.norm2.params()
                + self.ffn.params() + self.norm3.params())
