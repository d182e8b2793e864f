"""Two-layer GRU decoder with additive attention and the (optionally
topic-extended) output layer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import GruParams, gru_cell
from .numerics import MASK_VALUE, Node, concat, linear, mul, reshape, softmax, sum_, take_rows, tanh


@dataclass
class AttentionParams:
    va: Node
    Wa: Node
    Ua: Node

    @classmethod
    def create(cls, params, prefix, query_size, key_size, attn_size, rng):
        return cls(
            va=params.add(f"{prefix}.va", rng.uniform(-0.1, 0.1, size=attn_size)),
            Wa=params.matrix(f"{prefix}.Wa", attn_size, query_size, rng),
            Ua=params.matrix(f"{prefix}.Ua", attn_size, key_size, rng),
        )


@dataclass
class DecoderParams:
    embed: Node
    layers: list  # GruParams per layer
    attn: AttentionParams
    Ww: Node
    Wc: Node
    Ws: Node
    bo: Node
    Wo: Node
    bv: Node

    @classmethod
    def create(cls, params, *, vocab_size, word_dim, state_size, context_size, topic_size, rng,
               attn_size=None, n_layers=2, embed=None):
        if embed is None:
            embed = params.add("emb.tgt", rng.uniform(-0.1, 0.1, size=(vocab_size, word_dim)))
        layers = []
        size = word_dim + context_size
        for i in range(1, n_layers + 1):
            layers.append(GruParams.create(params, f"dec.l{i}", size, state_size, rng))
            size = state_size
        out_size = state_size
        return cls(
            embed=embed,
            layers=layers,
            attn=AttentionParams.create(params, "dec.attn", state_size, context_size, attn_size or state_size, rng),
            Ww=params.matrix("out.Ww", out_size, word_dim, rng),
            Wc=params.matrix("out.Wc", out_size, context_size, rng),
            Ws=params.matrix("out.Ws", out_size, state_size + topic_size, rng),
            bo=params.bias("out.bo", out_size),
            Wo=params.matrix("out.Wo", vocab_size, out_size, rng),
            bv=params.bias("out.bv", vocab_size),
        )

    @property
    def vocab_size(self):
        return self.Wo.shape[0]

    @property
    def topic_size(self):
        return self.Ws.shape[1] - self.layers[-1].state_size


@dataclass
class DecoderState:
    layers: list  # hidden state per layer
    context: Node


def attention_keys(H, p):
    """Precompute U_a h_i for every encoder position."""
    return linear(H, p.Ua)


def additive_attention(query, H, p, keys=None, mask=None):
    """g_i = v_a . tanh(W_a s + U_a h_i); returns (weights, context)."""
    H = H if isinstance(H, Node) else Node(H)
    if H.shape[-2] == 0:
        raise ValueError("additive_attention: empty encoder states")
    if keys is None:
        keys = attention_keys(H, p)
    q = linear(query, p.Wa)
    q = reshape(q, q.shape[:-1] + (1, q.shape[-1]))
    g = sum_(mul(tanh(keys + q), p.va), axis=-1)
    if mask is not None:
        g = g + np.where(np.asarray(mask) > 0, 0.0, MASK_VALUE)
    a = softmax(g)
    c = sum_(mul(reshape(a, a.shape + (1,)), H), axis=-2)
    return a, c


def initial_state(layer_states, H):
    lead = H.shape[:-2]
    return DecoderState(list(layer_states), Node(np.zeros(lead + (H.shape[-1],))))


def decoder_step(y_prev, state, topic, H, p, keys=None, mask=None, drop=None):
    """Advance one token; returns (new state, logits, attention weights).

    ``topic`` is the pooled topic vector (Node) or None for the base model.
    """
    y_prev = np.asarray(y_prev, dtype=np.int64)
    if y_prev.size and (y_prev.min() < 0 or y_prev.max() >= p.vocab_size):
        raise ValueError(f"decoder_step: token id out of range [0, {p.vocab_size})")
    drop = drop or (lambda t: t)
    w = drop(take_rows(p.embed, y_prev))
    x = concat([w, state.context], axis=-1)
    new_layers = []
    for i, (cell, h) in enumerate(zip(p.layers, state.layers)):
        h_new = gru_cell(x, h, cell)
        new_layers.append(h_new)
        x = drop(h_new) if i < len(p.layers) - 1 else h_new
    # query with the previous top-layer state
    a, c = additive_attention(state.layers[-1], H, p.attn, keys=keys, mask=mask)
    s_top = drop(new_layers[-1])
    if p.topic_size:
        if topic is None:
            raise ValueError("decoder expects a topic vector")
        s_top = concat([s_top, topic], axis=-1)
    o = linear(w, p.Ww) + linear(c, p.Wc) + linear(s_top, p.Ws, p.bo)
    logits = linear(drop(o), p.Wo, p.bv)
    return DecoderState(new_layers, c), logits, a
