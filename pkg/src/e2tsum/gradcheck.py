"""Finite-difference gradient suite over every differentiable operation and
the end-to-end training loss."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numerics as N
from .config import TrainConfig
from .corpus import AnnotatedDocument, EntityMention, build_vocabs
from .decoder import AttentionParams, DecoderParams, DecoderState, additive_attention, decoder_step
from .encoder import EncoderParams, GruParams, InitProjection, bigru_layer, encode_text, gru_cell, init_decoder_state, states_matrix
from .entity2topic import (
    E2TParams,
    encode_entities_cnn,
    encode_entities_rnn,
    entity2topic,
    firm_attention_pool,
    selective_disambiguation,
    soft_attention_pool,
)
from .numerics.gradcheck import check_gradients, check_leaves
from .training import nll_loss

OP_TOL = 1e-4
LOSS_TOL = 1e-3


@dataclass
class GradResult:
    name: str
    error: float
    tol: float

    @property
    def passed(self):
        return self.error <= self.tol

    def line(self):
        status = "ok" if self.passed else "FAIL"
        return f"{self.name}\t{self.error:.3e}\t{self.tol:.0e}\t{status}"


def _run(name, make, forward, extra, rng, tol=OP_TOL):
    """Check ``forward(obj, leaves)`` w.r.t. every weight ``make`` registers
    plus the ``extra`` input arrays."""
    P = N.Parameters()
    obj = make(P, np.random.default_rng(0))
    _nonzero(P, np.random.default_rng(1))
    leaves = {k: N.parameter(v, name=k) for k, v in extra.items()}
    everything = dict(P.items())
    everything.update(leaves)
    errors = check_leaves(lambda: forward(obj, leaves), everything, seed=int(rng.integers(1 << 30)))
    return GradResult(name, max(errors.values()), tol)


def _nonzero(P, rng, scale=0.3):
    # zero-initialised biases hide bias gradients behind the floor; randomise them
    for _, node in P.items():
        node.value = node.value + rng.uniform(-scale, scale, size=node.shape)


def op_cases(rng):
    """Yield GradResult for each primitive and composite op."""
    B, n, d, S = 2, 4, 3, 3
    yield GradResult("softmax", max(check_gradients(lambda v: N.softmax(v["x"]), {"x": rng.normal(size=(3, 5))}).values()), OP_TOL)
    yield GradResult("log_softmax", max(check_gradients(lambda v: N.log_softmax(v["x"]), {"x": rng.normal(size=(3, 5))}).values()), OP_TOL)
    yield GradResult("linear", max(check_gradients(
        lambda v: N.linear(v["x"], v["W"], v["b"]),
        {"x": rng.normal(size=(2, 3, 4)), "W": rng.normal(size=(5, 4)), "b": rng.normal(size=5)}).values()), OP_TOL)
    yield GradResult("matmul", max(check_gradients(
        lambda v: N.matmul(v["a"], v["b"]), {"a": rng.normal(size=(2, 3, 4)), "b": rng.normal(size=(2, 4, 2))}).values()), OP_TOL)
    yield GradResult("elementwise", max(check_gradients(
        lambda v: N.tanh(v["a"]) * N.sigmoid(v["b"]) - N.exp(v["a"] * 0.5) + N.log(N.exp(v["b"])),
        {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(4,))}).values()), OP_TOL)
    yield GradResult("shape_ops", max(check_gradients(
        lambda v: N.concat([N.stack([v["a"][0], v["a"][1]], axis=0), N.transpose(N.reshape(v["b"], (3, 2)))], axis=-1),
        {"a": rng.normal(size=(2, 2)), "b": rng.normal(size=6)}).values()), OP_TOL)
    yield GradResult("take_rows", max(check_gradients(
        lambda v: N.take_rows(v["E"], np.array([[0, 2, 2], [1, 0, 3]])), {"E": rng.normal(size=(4, 3))}).values()), OP_TOL)
    yield GradResult("pick", max(check_gradients(
        lambda v: N.pick(v["x"], np.array([[0, 2], [1, 1]])), {"x": rng.normal(size=(2, 2, 3))}).values()), OP_TOL)

    def make_gru(P, r):
        return GruParams.create(P, "g", d, S, r)
    yield _run("gru_cell", make_gru, lambda p, v: gru_cell(v["x"], v["h"], p),
               {"x": rng.normal(size=(B, d)), "h": rng.uniform(-0.9, 0.9, size=(B, S))}, rng)

    def make_bigru(P, r):
        return GruParams.create(P, "f", d, S, r), GruParams.create(P, "b", d, S, r)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=float)
    yield _run("bigru_layer", make_bigru,
               lambda p, v: states_matrix(*bigru_layer(v["x"], p[0], p[1], mask)),
               {"x": rng.normal(size=(B, n, d))}, rng)

    ids = np.array([[1, 4, 2, 0], [3, 3, 0, 0]])

    def make_enc(P, r):
        return P.add("emb", r.normal(size=(5, d))), EncoderParams.create(P, d, S, r)
    yield _run("encode_text", make_enc,
               lambda p, v: N.concat([N.reshape(encode_text(ids, p[0], p[1], mask=(ids > 0) * 1.0).H, (B, -1)),
                                      encode_text(ids, p[0], p[1], mask=(ids > 0) * 1.0).s], axis=-1),
               {}, rng)

    def make_init(P, r):
        return InitProjection.create(P, 2 * S, S, r)
    yield _run("init_decoder_state", make_init,
               lambda p, v: N.concat(init_decoder_state(v["s"], p), axis=-1), {"s": rng.normal(size=(B, 2 * S))}, rng)

    def make_att(P, r):
        return AttentionParams.create(P, "a", S, 2 * S, 4, r)
    yield _run("additive_attention", make_att,
               lambda p, v: N.concat(list(additive_attention(v["q"], v["H"], p, mask=mask)), axis=-1),
               {"q": rng.normal(size=(B, S)), "H": rng.normal(size=(B, n, 2 * S))}, rng)

    V, T = 6, 4

    def make_dec(P, r):
        return DecoderParams.create(P, vocab_size=V, word_dim=d, state_size=S, context_size=2 * S, topic_size=T, rng=r)

    def dec_forward(p, v):
        state = DecoderState([v["h1"], v["h2"]], v["c"])
        new, logits, a = decoder_step(np.array([2, 5]), state, v["t"], v["H"], p, mask=mask)
        return N.concat([logits, new.layers[0], new.layers[1], new.context, a], axis=-1)
    yield _run("decoder_step", make_dec, dec_forward, {
        "h1": rng.uniform(-0.9, 0.9, size=(B, S)), "h2": rng.uniform(-0.9, 0.9, size=(B, S)),
        "c": rng.normal(size=(B, 2 * S)), "t": rng.normal(size=(B, T)), "H": rng.normal(size=(B, n, 2 * S))}, rng)

    m, de = 5, 3
    emask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=float)
    yield _run("encode_entities_rnn", make_bigru,
               lambda p, v: encode_entities_rnn(v["E"], p[0], p[1], mask=emask), {"E": rng.normal(size=(B, m, de))}, rng)

    for h in (2, 3, 4, 5):
        def make_cnn(P, r, h=h):
            return [(h, P.matrix(f"c{h}.W", 3, h * de, r), P.bias(f"c{h}.b", 3))]
        yield _run(f"encode_entities_cnn[h={h}]", make_cnn,
                   lambda p, v: encode_entities_cnn(v["E"], p), {"E": rng.normal(size=(B, m, de))}, rng)

    for vector_gate in (False, True):
        def make_gate(P, r, vg=vector_gate):
            return E2TParams.create(P, entity_dim=de, context_size=2 * S, rng=r, encoder="cnn",
                                    filter_sizes=(3,), feature_maps=(4,), topic_size=3, vector_gate=vg)
        tag = "vector" if vector_gate else "scalar"
        yield _run(f"selective_disambiguation[{tag}]", make_gate,
                   lambda p, v: selective_disambiguation(v["e"], v["ed"], p)[0],
                   {"e": rng.normal(size=(m, de)), "ed": rng.normal(size=(m, 4))}, rng)

    def make_pool(P, r):
        return E2TParams.create(P, entity_dim=de, context_size=2 * S, rng=r, encoder="cnn",
                                filter_sizes=(3,), feature_maps=(4,), topic_size=3)
    for k in (1, 2, 3):
        yield _run(f"firm_attention_pool[k={k}]", make_pool,
                   lambda p, v, k=k: N.concat([firm_attention_pool(v["E"], v["s"], k, p).t,
                                               firm_attention_pool(v["E"], v["s"], k, p).weights], axis=-1),
                   {"E": rng.normal(size=(m, 3)), "s": rng.normal(size=2 * S)}, rng)
    yield _run("soft_attention_pool", make_pool,
               lambda p, v: soft_attention_pool(v["E"], v["s"], p).t,
               {"E": rng.normal(size=(m, 3)), "s": rng.normal(size=2 * S)}, rng)

    for enc in ("rnn", "cnn"):
        for k in (2, None):
            def make_e2t(P, r, enc=enc):
                return E2TParams.create(P, entity_dim=de, context_size=2 * S, rng=r, encoder=enc, entity_state=3,
                                        filter_sizes=(3, 4), feature_maps=(2, 2), topic_size=3)
            pool = "soft" if k is None else "firm"
            yield _run(f"entity2topic[{enc},{pool}]", make_e2t,
                       lambda p, v, k=k: entity2topic(v["E"], v["s"], p, k=k, mask=emask).t,
                       {"E": rng.normal(size=(B, m, de)), "s": rng.normal(size=(B, 2 * S))}, rng)

    targets = np.array([[1, 3, 0], [2, 2, 1]])
    tmask = np.array([[1, 1, 0], [1, 1, 1]], dtype=float)
    yield GradResult("nll_loss", max(check_gradients(
        lambda v: nll_loss(v["x"], targets, tmask), {"x": rng.normal(size=(2, 3, 4))}).values()), OP_TOL)


def tiny_corpus():
    return [
        AnnotatedDocument("g0", ["the", "mets", "beat", "dodgers"], ["mets", "win"],
                          [EntityMention("NY_Mets", 1, 2), EntityMention("LA_Dodgers", 3, 4)]),
    ]


def model_loss_case(name, overrides, step=1e-5):
    """Gradient of the full teacher-forced loss on a 1-example, 3-token
    target w.r.t. every parameter of the model."""
    from .model import Summarizer

    docs = tiny_corpus()
    cfg = TrainConfig(word_dim=3, entity_dim=3, state_size=3, entity_state_size=2, filter_sizes=(3, 4),
                      feature_maps=(2, 2), topic_size=3, dropout=0.0, k=1, **overrides)
    model = Summarizer(cfg, *build_vocabs(docs))
    _nonzero(model.params, np.random.default_rng(3), scale=0.2)
    batch = model.batch(docs)
    errors = check_leaves(lambda: model.loss(batch)[0], dict(model.params.items()), step=step, scalar=True)
    worst = max(errors.values())
    return GradResult(name, worst, LOSS_TOL)


def loss_cases():
    yield model_loss_case("model_loss[base]", {"use_e2t": False})
    yield model_loss_case("model_loss[e2t,cnn,firm,sd]", {"use_e2t": True, "encoder": "cnn", "pooling": "firm"})
    yield model_loss_case("model_loss[e2t,rnn,soft,sd]", {"use_e2t": True, "encoder": "rnn", "pooling": "soft"})


def run_suite(seed=0, include_loss=True):
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    results = list(op_cases(rng))
    if include_loss:
        results.extend(loss_cases())
    return results, time.perf_counter() - start
