"""Two-layer bidirectional GRU text encoder.

Sequences are laid out with the time axis second to last, so the same code
handles a single example ``(n, d)`` and a right-padded batch ``(B, n, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Node, concat, getitem, linear, mul, sigmoid, stack, take_rows, tanh


@dataclass
class GruParams:
    Wz: Node
    Uz: Node
    bz: Node
    Wr: Node
    Ur: Node
    br: Node
    Wh: Node
    Uh: Node
    bh: Node

    @classmethod
    def create(cls, params, prefix, input_size, state_size, rng):
        kw = {}
        for gate in "zrh":
            kw[f"W{gate}"] = params.matrix(f"{prefix}.W{gate}", state_size, input_size, rng)
            kw[f"U{gate}"] = params.matrix(f"{prefix}.U{gate}", state_size, state_size, rng)
            kw[f"b{gate}"] = params.bias(f"{prefix}.b{gate}", state_size)
        return cls(**kw)

    @property
    def state_size(self):
        return self.Uz.shape[0]

    @property
    def input_size(self):
        return self.Wz.shape[1]


def _gru_update(xz, xr, xh, h, p):
    z = sigmoid(xz + linear(h, p.Uz))
    r = sigmoid(xr + linear(h, p.Ur))
    cand = tanh(xh + linear(r * h, p.Uh))
    # (1 - z) * h + z * cand
    return h + z * (cand - h)


def gru_cell(x, h_prev, p):
    x_dim = x.shape[-1]
    if x_dim != p.input_size or h_prev.shape[-1] != p.state_size:
        raise ValueError(
            f"gru_cell: got input {x_dim}/state {h_prev.shape[-1]}, "
            f"expected {p.input_size}/{p.state_size}"
        )
    return _gru_update(linear(x, p.Wz, p.bz), linear(x, p.Wr, p.br), linear(x, p.Wh, p.bh), h_prev, p)


def _scan(proj, p, order, zero, mask):
    xz, xr, xh = proj
    states = [None] * len(order)
    h = zero
    for t in order:
        idx = (Ellipsis, t, slice(None))
        h_new = _gru_update(getitem(xz, idx), getitem(xr, idx), getitem(xh, idx), h, p)
        if mask is not None:
            m = mask[..., t, None]
            # padded steps carry the previous state through unchanged
            h_new = h + mul(h_new - h, m) if not m.all() else h_new
        h = h_new
        states[t] = h
    return states


def bigru_layer(xs, fwd, bwd, mask=None):
    """Scan ``xs`` (``(..., n, d)``) both ways from zero states.

    Returns per-position forward and backward state lists aligned to tokens.
    With a ``(..., n)`` 0/1 ``mask`` the backward scan effectively starts at
    each sequence's true last token.
    """
    xs = xs if isinstance(xs, Node) else Node(xs)
    n = xs.shape[-2]
    if n == 0:
        raise ValueError("bigru_layer: empty sequence")
    lead = xs.shape[:-2]
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
    out = []
    for p, order in ((fwd, range(n)), (bwd, range(n - 1, -1, -1))):
        proj = (linear(xs, p.Wz, p.bz), linear(xs, p.Wr, p.br), linear(xs, p.Wh, p.bh))
        zero = Node(np.zeros(lead + (p.state_size,)))
        out.append(_scan(proj, p, list(order), zero, mask))
    return out[0], out[1]


def states_matrix(fwd, bwd):
    """Stack aligned states into ``(..., n, 2*state)``."""
    return concat([stack(fwd, axis=-2), stack(bwd, axis=-2)], axis=-1)


@dataclass
class EncoderParams:
    layers: list  # [(fwd GruParams, bwd GruParams)] per layer

    @classmethod
    def create(cls, params, input_size, state_size, rng, prefix="enc", n_layers=2):
        layers = []
        size = input_size
        for i in range(1, n_layers + 1):
            layers.append((
                GruParams.create(params, f"{prefix}.l{i}.fwd", size, state_size, rng),
                GruParams.create(params, f"{prefix}.l{i}.bwd", size, state_size, rng),
            ))
            size = 2 * state_size
        return cls(layers)


@dataclass
class EncoderOutput:
    H: Node  # (..., n, 2*state)
    s: Node  # (..., 2*state)
    finals: list  # per layer [fwd_n; bwd_1]


def encode_text(token_ids, embeddings, params, mask=None, drop=None):
    """Embed ``token_ids`` (``(n,)`` or ``(B, n)``) and run the stacked BiGRU."""
    token_ids = np.asarray(token_ids, dtype=np.int64)
    if token_ids.shape[-1] == 0:
        raise ValueError("encode_text: empty input")
    vocab_size = embeddings.shape[0]
    if token_ids.min() < 0 or token_ids.max() >= vocab_size:
        raise ValueError(f"encode_text: token id out of range [0, {vocab_size})")
    drop = drop or (lambda t: t)
    x = drop(take_rows(embeddings, token_ids))
    finals = []
    H = None
    for fwd, bwd in params.layers:
        fs, bs = bigru_layer(x, fwd, bwd, mask)
        H = states_matrix(fs, bs)
        finals.append(concat([fs[-1], bs[0]], axis=-1))
        x = drop(H)
    return EncoderOutput(H, finals[-1], finals)


@dataclass
class InitProjection:
    weights: list  # [(W, b)] per decoder layer

    @classmethod
    def create(cls, params, input_size, state_size, rng, n_layers=2, prefix="dec.init"):
        return cls([
            (params.matrix(f"{prefix}.l{i}.W", state_size, input_size, rng), params.bias(f"{prefix}.l{i}.b", state_size))
            for i in range(1, n_layers + 1)
        ])


def init_decoder_state(s, proj):
    """One tanh-affine projection of ``s`` per decoder layer."""
    return [tanh(linear(s, W, b)) for W, b in proj.weights]
