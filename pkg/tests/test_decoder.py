import math

import numpy as np
import pytest

from e2tsum import corpus as C
from e2tsum import decoder as D
from e2tsum import numerics as N
from e2tsum.config import TrainConfig
from e2tsum.model import Summarizer

S, CTX, V, WD = 3, 4, 7, 2


def attn(seed=0):
    return D.AttentionParams.create(N.Parameters(), "a", S, CTX, 5, np.random.default_rng(seed))


def dec(topic_size, seed=0):
    P = N.Parameters()
    p = D.DecoderParams.create(P, vocab_size=V, word_dim=WD, state_size=S, context_size=CTX,
                               topic_size=topic_size, rng=np.random.default_rng(seed))
    return P, p


def state(rng):
    return D.DecoderState([N.Node(rng.uniform(-1, 1, size=S)) for _ in range(2)], N.Node(rng.normal(size=CTX)))


class TestAttention:
    def test_zero_params_uniform(self):
        p = attn()
        p.va.value = np.zeros(5)
        H = np.random.default_rng(1).normal(size=(4, CTX))
        a, c = D.additive_attention(np.ones(S), H, p)
        np.testing.assert_allclose(a.value, np.full(4, 0.25), atol=1e-16)
        np.testing.assert_allclose(c.value, H.mean(axis=0), atol=1e-15)

    def test_single_unmasked(self):
        H = np.random.default_rng(2).normal(size=(4, CTX))
        a, c = D.additive_attention(np.ones(S), H, attn(), mask=np.array([0, 0, 1, 0]))
        assert a.value[2] == 1.0 and np.all(a.value[[0, 1, 3]] <= 1e-30)
        np.testing.assert_array_equal(c.value, H[2])

    def test_three_row_oracle(self):
        p = attn(3)
        rng = np.random.default_rng(4)
        q, H = rng.normal(size=S), rng.normal(size=(3, CTX))
        g = [float(p.va.value @ np.tanh(p.Wa.value @ q + p.Ua.value @ h)) for h in H]
        w = [math.exp(x) for x in g]
        a = [x / sum(w) for x in w]
        got_a, got_c = D.additive_attention(q, H, p)
        np.testing.assert_allclose(got_a.value, a, atol=1e-15)
        np.testing.assert_allclose(got_c.value, sum(a[i] * H[i] for i in range(3)), atol=1e-15)

    def test_empty(self):
        with pytest.raises(ValueError):
            D.additive_attention(np.ones(S), np.zeros((0, CTX)), attn())


class TestDecoderStep:
    def test_logits_shape_independent_of_topic(self):
        rng = np.random.default_rng(5)
        H = rng.normal(size=(4, CTX))
        _, base = dec(0)
        _, with_topic = dec(6)
        s0 = state(rng)
        assert D.decoder_step(2, s0, None, H, base)[1].shape == (V,)
        assert D.decoder_step(2, s0, rng.normal(size=6), H, with_topic)[1].shape == (V,)

    def test_zero_topic_equals_zeroed_columns(self):
        rng = np.random.default_rng(6)
        H, s0 = rng.normal(size=(4, CTX)), state(rng)
        P_t, p_t = dec(5, seed=1)
        P_b, p_b = dec(0, seed=2)
        for name, node in P_b.items():
            node.value = P_t[name].value[:, :S].copy() if name == "out.Ws" else P_t[name].value.copy()
        _, with_zero, _ = D.decoder_step(3, s0, np.zeros(5), H, p_t)
        _, without, _ = D.decoder_step(3, s0, None, H, p_b)
        np.testing.assert_allclose(with_zero.value, without.value, atol=1e-14)

    def test_distribution_valid(self):
        rng = np.random.default_rng(7)
        _, p = dec(0)
        logits = D.decoder_step(1, state(rng), None, rng.normal(size=(3, CTX)), p)[1]
        probs = N.softmax(logits).value
        assert np.all(probs >= 0) and abs(probs.sum() - 1) < 1e-12

    def test_query_is_previous_top_state(self, monkeypatch):
        rng = np.random.default_rng(8)
        _, p = dec(0)
        s0 = state(rng)
        seen = []
        real = D.additive_attention
        monkeypatch.setattr(D, "additive_attention", lambda q, *a, **k: seen.append(q) or real(q, *a, **k))
        D.decoder_step(1, s0, None, rng.normal(size=(3, CTX)), p)
        assert seen == [s0.layers[-1]]

    def test_id_out_of_range(self):
        rng = np.random.default_rng(9)
        _, p = dec(0)
        with pytest.raises(ValueError, match="out of range"):
            D.decoder_step(V, state(rng), None, rng.normal(size=(3, CTX)), p)

    def test_padded_positions_get_no_weight(self):
        rng = np.random.default_rng(10)
        _, p = dec(0)
        _, _, a = D.decoder_step(1, state(rng), None, rng.normal(size=(5, CTX)), p, mask=np.array([1, 1, 1, 0, 0]))
        assert np.all(a.value[3:] <= 1e-30)


def tiny_model(use_e2t):
    docs = [C.AnnotatedDocument("0", ["a", "b", "c"], ["x", "y", "z"], [C.EntityMention("E1", 0, 1)]),
            C.AnnotatedDocument("1", ["b", "c"], ["y"], [C.EntityMention("E2", 1, 2)])]
    cfg = TrainConfig(word_dim=3, entity_dim=3, state_size=4, entity_state_size=2, filter_sizes=(3,),
                      feature_maps=(2,), topic_size=3, dropout=0.0, use_e2t=use_e2t, k=1)
    model = Summarizer(cfg, *C.build_vocabs(docs))
    return model, model.batch(docs)


class TestTeacherForcing:
    @pytest.mark.parametrize("use_e2t", [False, True])
    def test_one_attention_query_per_step(self, monkeypatch, use_e2t):
        model, batch = tiny_model(use_e2t)
        calls = []
        real = D.additive_attention
        monkeypatch.setattr(D, "additive_attention", lambda *a, **k: calls.append(1) or real(*a, **k))
        model.step_logits(batch)
        assert len(calls) == batch.tgt_in.shape[1] == 4

    def test_topic_constant_across_steps(self, monkeypatch):
        import e2tsum.model as M
        model, batch = tiny_model(True)
        topics = []
        real = M.decoder_step
        monkeypatch.setattr(M, "decoder_step", lambda y, s, t, *a, **k: topics.append(t) or real(y, s, t, *a, **k))
        model.step_logits(batch)
        assert len(topics) == 4 and all(t is topics[0] for t in topics)
