"""Entity2Topic: entity encoding with selective disambiguation, then firm
(top-k) attention pooling into a single topic vector."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoder import GruParams, bigru_layer, states_matrix
from .numerics import (
    MASK_VALUE,
    Node,
    concat,
    getitem,
    linear,
    mul,
    reshape,
    sigmoid,
    softmax,
    sum_,
    tanh,
)


@dataclass
class TopicVector:
    t: Node
    weights: Node
    gate: Node = None


@dataclass
class E2TParams:
    encoder: str  # "rnn" | "cnn"
    rnn: tuple = None  # (fwd, bwd) GruParams
    filters: list = field(default_factory=list)  # [(h, W_f, b_f)]
    Wd: Node = None
    bd: Node = None
    Wx: Node = None
    bx: Node = None
    Wy: Node = None
    by: Node = None
    va: Node = None
    Wa: Node = None
    Ua: Node = None

    @property
    def topic_size(self):
        return self.Wy.shape[0]

    @classmethod
    def create(cls, params, *, entity_dim, context_size, rng, encoder="cnn", entity_state=500,
               filter_sizes=(3, 4, 5), feature_maps=(400, 300, 300), topic_size=None,
               attn_size=None, vector_gate=False):
        if encoder == "rnn":
            rnn = (
                GruParams.create(params, "e2t.rnn.fwd", entity_dim, entity_state, rng),
                GruParams.create(params, "e2t.rnn.bwd", entity_dim, entity_state, rng),
            )
            filters, enc_size = [], 2 * entity_state
        elif encoder == "cnn":
            if len(filter_sizes) != len(feature_maps):
                raise ValueError("filter_sizes and feature_maps differ in length")
            rnn = None
            filters = [
                (h, params.matrix(f"e2t.cnn.h{h}.W", maps, h * entity_dim, rng), params.bias(f"e2t.cnn.h{h}.b", maps))
                for h, maps in zip(filter_sizes, feature_maps)
            ]
            enc_size = sum(feature_maps)
        else:
            raise ValueError(f"unknown entity encoder {encoder!r}")
        topic_size = topic_size or enc_size
        attn_size = attn_size or topic_size
        gate_size = topic_size if vector_gate else 1
        return cls(
            encoder=encoder, rnn=rnn, filters=filters,
            Wd=params.matrix("e2t.gate.Wd", gate_size, enc_size, rng),
            bd=params.bias("e2t.gate.bd", gate_size),
            Wx=params.matrix("e2t.gate.Wx", topic_size, entity_dim, rng),
            bx=params.bias("e2t.gate.bx", topic_size),
            Wy=params.matrix("e2t.gate.Wy", topic_size, enc_size, rng),
            by=params.bias("e2t.gate.by", topic_size),
            va=params.add("e2t.attn.va", rng.uniform(-0.1, 0.1, size=attn_size)),
            Wa=params.matrix("e2t.attn.Wa", attn_size, topic_size, rng),
            Ua=params.matrix("e2t.attn.Ua", attn_size, context_size, rng),
        )


def encode_entities_rnn(E, fwd, bwd, mask=None):
    """Global disambiguation: BiGRU over the entity sequence."""
    E = E if isinstance(E, Node) else Node(E)
    if E.shape[-2] == 0:
        raise ValueError("encode_entities_rnn: no entities")
    fs, bs = bigru_layer(E, fwd, bwd, mask)
    return states_matrix(fs, bs)


def conv_padding(h):
    """(left, right) zero padding that keeps the output length equal to m."""
    return h // 2, (h - 1) // 2


def encode_entities_cnn(E, filters):
    """Local disambiguation: same-length 1-D convolutions, one per filter size.

    ``E`` is ``(..., m, d)``; padded batch rows must already be zero vectors.
    """
    E = E if isinstance(E, Node) else Node(E)
    m, d = E.shape[-2], E.shape[-1]
    lead = E.shape[:-2]
    outs = []
    for h, W, b in filters:
        left, right = conv_padding(h)
        parts = []
        if left:
            parts.append(Node(np.zeros(lead + (left, d))))
        parts.append(E)
        if right:
            parts.append(Node(np.zeros(lead + (right, d))))
        padded = concat(parts, axis=-2) if len(parts) > 1 else E
        windows = concat(
            [getitem(padded, (Ellipsis, slice(j, j + m), slice(None))) for j in range(h)], axis=-1
        ) if h > 1 else padded
        outs.append(tanh(linear(windows, W, b)))
    return concat(outs, axis=-1) if len(outs) > 1 else outs[0]


def selective_disambiguation(e, e_dis, p, gate=True):
    """Mix the raw-entity branch and the disambiguated branch with gate d.

    With ``gate=False`` only the disambiguated branch is used.
    """
    disamb = tanh(linear(e_dis, p.Wy, p.by))
    if not gate:
        return disamb, None
    d = sigmoid(linear(e_dis, p.Wd, p.bd))
    raw = tanh(linear(e, p.Wx, p.bx))
    # d * raw + (1 - d) * disamb
    return disamb + d * (raw - disamb), d


def top_k_indices(G, k):
    """Indices of the min(k, m) largest scores, ties to the lower index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    G = np.asarray(G, dtype=np.float64)
    order = np.argsort(-G, kind="stable")
    return np.sort(order[:k])


def sparse_mask(K, m):
    P = np.full(m, MASK_VALUE)
    P[np.asarray(K, dtype=np.int64)] = 0.0
    return P


def batch_firm_mask(G, k, valid=None):
    """Row-wise top-k mask for scores ``(..., m)``; invalid positions are
    never selected and always masked."""
    G = np.asarray(G, dtype=np.float64)
    if valid is not None:
        G = np.where(valid > 0, G, -np.inf)
    order = np.argsort(-G, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(G.shape[-1]) * np.ones_like(order), axis=-1)
    keep = ranks < (G.shape[-1] if k is None else k)
    if valid is not None:
        keep &= valid > 0
    return np.where(keep, 0.0, MASK_VALUE)


def attention_scores(E_t, s, p):
    """g_i = v_a . tanh(W_a e_i + U_a s) for every entity row."""
    keys = linear(E_t, p.Wa)
    query = linear(s, p.Ua)
    q = reshape(query, query.shape[:-1] + (1, query.shape[-1]))
    return sum_(mul(tanh(keys + q), p.va), axis=-1)


def _pool(E_t, a):
    return sum_(mul(reshape(a, a.shape + (1,)), E_t), axis=-2)


def firm_attention_pool(E_t, s, k, p, valid=None):
    """Top-k attention pooling; ``k=None`` keeps every entity (soft)."""
    E_t = E_t if isinstance(E_t, Node) else Node(E_t)
    if E_t.shape[-2] == 0:
        raise ValueError("firm_attention_pool: no entities")
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")
    g = attention_scores(E_t, s, p)
    if k is None and valid is None:
        a = softmax(g)
    else:
        a = softmax(g + batch_firm_mask(g.value, k, valid))
    return TopicVector(_pool(E_t, a), a)


def soft_attention_pool(E_t, s, p, valid=None):
    return firm_attention_pool(E_t, s, None, p, valid)


def entity2topic(E, s, p, *, k=None, gate=True, mask=None, drop=None):
    """Full module: entity vectors ``E`` (``(..., m, d)``) and the text vector
    ``s`` to a topic vector.  Rows with no entities get a zero topic."""
    drop = drop or (lambda t: t)
    E = E if isinstance(E, Node) else Node(E)
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        E = mul(E, mask[..., None])
    if p.encoder == "rnn":
        E_dis = encode_entities_rnn(E, *p.rnn, mask=mask)
    else:
        E_dis = encode_entities_cnn(E, p.filters)
    E_t, d = selective_disambiguation(E, E_dis, p, gate=gate)
    E_t = drop(E_t)
    topic = firm_attention_pool(E_t, s, k, p, valid=mask)
    topic.gate = d
    if mask is not None:
        has = (mask.sum(axis=-1) > 0).astype(np.float64)
        if not has.all():
            topic.t = mul(topic.t, has[..., None])
    return topic
