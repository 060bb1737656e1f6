"""Three-encoder comment generation models.

Both cells share the same interface: ``forward(batch, prefix, training, rng)``
returns logits over the comment vocabulary for every prefix position.  The
``variant`` field of the config selects which encoder inputs are consumed
(code only; code+ast; code+doc; all three); inactive sources get no
parameters at all, so a code-only model cannot leak gradient into unused
embeddings.  Encoder memories are concatenated along the sequence axis and
the decoder cross-attends over the fused result.
"""

from __future__ import annotations

import numpy as np

from comgen.corpus import PAD_ID
from comgen.nnet import tensor as T
from comgen.nnet.config import ModelConfig
from comgen.nnet.layers import (
    EncoderLayer, DecoderLayer, Linear, xavier,
)

# fixed per-component RNG streams so that, at equal seed, the shared
# components of two variants initialize identically
_COMPONENT_STREAM = {"code": 0, "ast": 1, "doc": 2, "decoder": 3}


def _component_rng(seed, component):
    return np.random.default_rng([seed, _COMPONENT_STREAM[component]])


def fuse_memories(memories, valids):
    """Concatenate per-encoder memories along the sequence axis.

    memories: list of (B, L_i, d) Tensors in source order; valids: matching
    (B, L_i) bool arrays. Returns (fused, fused_valid).
    """
    if len(memories) == 1:
        return memories[0], valids[0]
    d = memories[0].shape[-1]
    for m in memories[1:]:
        if m.shape[-1] != d:
            raise ValueError(f"memory width mismatch: {m.shape[-1]} vs {d}")
    return T.concat(memories, axis=1), np.concatenate(valids, axis=1)


class TransformerModel:
    def __init__(self, config: ModelConfig, vocab_sizes: dict):
        self.config = config
        self.vocab_sizes = dict(vocab_sizes)
        d, h, ff, k = config.d_model, config.heads, config.d_ff, config.rel_pos_k
        self.embeddings = {}
        self.enc_layers = {}
        for src in config.sources:
            rng = _component_rng(config.seed, src)
            self.embeddings[src] = T.parameter(
                xavier(rng, (vocab_sizes[src], d)), name=f"{src}.emb")
            self.enc_layers[src] = [
                EncoderLayer(rng, d, h, ff, k, f"{src}.l{i}")
                for i in range(config.layers)]
        rng = _component_rng(config.seed, "decoder")
        self.comment_emb = T.parameter(
            xavier(rng, (vocab_sizes["comment"], d)), name="decoder.emb")
        self.dec_layers = [
            DecoderLayer(rng, d, h, ff, k, f"decoder.l{i}")
            for i in range(config.layers)]
        self.out = Linear(rng, d, vocab_sizes["comment"], "decoder.out")

    def params(self):
        ps = {}
        for src in self.config.sources:
            for p in [self.embeddings[src]] + [q for l in self.enc_layers[src]
                                               for q in l.params()]:
                ps[p.name] = p
        for p in ([self.comment_emb]
                  + [q for l in self.dec_layers for q in l.params()]
                  + self.out.params()):
            ps[p.name] = p
        return ps

    def encode_source(self, src, ids, training=False, rng=None):
        ids = np.asarray(ids)
        if ids.max(initial=0) >= self.vocab_sizes[src]:
            raise ValueError(f"{src} ids exceed vocab size {self.vocab_sizes[src]}")
        valid = ids != PAD_ID
        x = T.dropout(T.embedding(self.embeddings[src], ids),
                      self.config.dropout, rng, training)
        for layer in self.enc_layers[src]:
            x = layer(x, valid, self.config.dropout, rng, training)
        return x, valid

    def encode(self, batch, training=False, rng=None):
        memories, valids = [], []
        for src in self.config.sources:
            m, v = self.encode_source(src, batch[src], training, rng)
            memories.append(m)
            valids.append(v)
        return fuse_memories(memories, valids)

    def decode(self, memory, mem_valid, prefix, training=False, rng=None):
        prefix = np.asarray(prefix)
        if prefix.shape[1] == 0:
            raise ValueError("decoder prefix must be non-empty")
        self_valid = prefix != PAD_ID
        x = T.dropout(T.embedding(self.comment_emb, prefix),
                      self.config.dropout, rng, training)
        for layer in self.dec_layers:
            x = layer(x, self_valid, memory, mem_valid,
                      self.config.dropout, rng, training)
        return self.out(x)

    def forward(self, batch, prefix, training=False, rng=None):
        memory, mem_valid = self.encode(batch, training, rng)
        return self.decode(memory, mem_valid, prefix, training, rng)


class GruEncoder:
    def __init__(self, rng, vocab_size, d, name):
        self.emb = T.parameter(xavier(rng, (vocab_size, d)), name=f"{name}.emb")
        self.wx = Linear(rng, d, 3 * d, f"{name}.wx")
        self.wh = T.parameter(xavier(rng, (d, 3 * d)), name=f"{name}.wh")
        self.bh = T.parameter(np.zeros(3 * d), name=f"{name}.bh")

    def __call__(self, ids, p_drop, rng, training):
        ids = np.asarray(ids)
        x = T.dropout(T.embedding(self.emb, ids), p_drop, rng, training)
        h0 = np.zeros((ids.shape[0], self.wh.shape[0]))
        return T.gru_sequence(self.wx(x), h0, self.wh, self.bh)

    def params(self):
        return [self.emb] + self.wx.params() + [self.wh, self.bh]


class GruModel:
    """GRU encoders over each active source plus an attentional GRU decoder.

    Decoder attention is dot-product over the concatenated encoder states;
    the attended context and decoder state are merged through a tanh layer
    before the final projection.
    """

    def __init__(self, config: ModelConfig, vocab_sizes: dict):
        self.config = config
        self.vocab_sizes = dict(vocab_sizes)
        d = config.d_model
        self.encoders = {}
        for src in config.sources:
            rng = _component_rng(config.seed, src)
            self.encoders[src] = GruEncoder(rng, vocab_sizes[src], d, src)
        rng = _component_rng(config.seed, "decoder")
        self.comment_emb = T.parameter(
            xavier(rng, (vocab_sizes["comment"], d)), name="decoder.emb")
        self.wx = Linear(rng, d, 3 * d, "decoder.wx")
        self.wh = T.parameter(xavier(rng, (d, 3 * d)), name="decoder.wh")
        self.bh = T.parameter(np.zeros(3 * d), name="decoder.bh")
        self.combine = Linear(rng, 2 * d, d, "decoder.combine")
        self.out = Linear(rng, d, vocab_sizes["comment"], "decoder.out")

    def params(self):
        ps = {}
        for src in self.config.sources:
            for p in self.encoders[src].params():
                ps[p.name] = p
        for p in ([self.comment_emb] + self.wx.params() + [self.wh, self.bh]
                  + self.combine.params() + self.out.params()):
            ps[p.name] = p
        return ps

    def encode(self, batch, training=False, rng=None):
        memories, valids = [], []
        for src in self.config.sources:
            ids = np.asarray(batch[src])
            if ids.max(initial=0) >= self.vocab_sizes[src]:
                raise ValueError(f"{src} ids exceed vocab size {self.vocab_sizes[src]}")
            memories.append(self.encoders[src](ids, self.config.dropout, rng, training))
            valids.append(ids != PAD_ID)
        return fuse_memories(memories, valids)

    def decode(self, memory, mem_valid, prefix, training=False, rng=None):
        prefix = np.asarray(prefix)
        if prefix.shape[1] == 0:
            raise ValueError("decoder prefix must be non-empty")
        p = self.config.dropout
        d = self.config.d_model
        x = T.dropout(T.embedding(self.comment_emb, prefix), p, rng, training)
        h0 = np.zeros((prefix.shape[0], d))
        h = T.gru_sequence(self.wx(x), h0, self.wh, self.bh)
        scores = T.scale(T.matmul(h, T.transpose(memory, (0, 2, 1))), 1.0 / np.sqrt(d))
        attn = T.masked_softmax(scores, mem_valid[:, None, :])
        ctx = T.matmul(attn, memory)
        mix = T.tanh(self.combine(T.concat([h, ctx], axis=2)))
        return self.out(T.dropout(mix, p, rng, training))

    def forward(self, batch, prefix, training=False, rng=None):
        memory, mem_valid = self.encode(batch, training, rng)
        return self.decode(memory, mem_valid, prefix, training, rng)


def build_model(config: ModelConfig, vocab_sizes: dict):
    if config.cell == "gru":
        return GruModel(config, vocab_sizes)
    return TransformerModel(config, vocab_sizes)
