import math
from types import SimpleNamespace

import numpy as np
import pytest

from e2tsum import numerics as N
from e2tsum.config import ConfigError, TrainConfig, apply_overrides, load_config
from e2tsum.model import build_model
from e2tsum.synthetic import memorization_corpus, topic_corpus
from e2tsum.training import (
    EarlyStopping,
    TrainingDiverged,
    is_constrained,
    nll_loss,
    perplexity,
    select_k,
    train,
    train_step,
)

# mpmath: -log softmax([1, 2, 0])[1], -log softmax([0, 0, 3])[0]
NLL_STEP1 = 0.40760596444438030448
NLL_STEP2 = 3.0949229564209608913


def small_config(**kw):
    base = dict(word_dim=8, entity_dim=8, state_size=8, entity_state_size=4, filter_sizes=(3,), feature_maps=(6,),
                batch_size=5, dropout=0.0, max_epochs=3, patience=3, k=2, beam_size=3, max_decode_len=6)
    base.update(kw)
    return TrainConfig(**base).validate()


class TestNll:
    def test_uniform(self):
        loss = nll_loss(N.Node(np.zeros((1, 3, 4))), np.array([[0, 1, 2]]))
        assert loss.value == pytest.approx(math.log(4), abs=1e-15)

    def test_confident(self):
        logits = np.zeros((2, 4))
        logits[[0, 1], [3, 1]] = 1e9
        assert nll_loss(N.Node(logits), np.array([3, 1])).value == pytest.approx(0.0, abs=1e-12)

    def test_two_step_hand(self):
        logits = N.Node(np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]]))
        loss = nll_loss(logits, np.array([1, 0]))
        assert loss.value == pytest.approx((NLL_STEP1 + NLL_STEP2) / 2, abs=1e-14)

    def test_mask_and_example_mean(self):
        logits = N.Node(np.random.default_rng(0).normal(size=(2, 3, 4)))
        targets = np.array([[1, 2, 0], [3, 3, 1]])
        mask = np.array([[1, 1, 0], [1, 1, 1]], dtype=float)
        lp = logits.value - np.log(np.exp(logits.value).sum(-1, keepdims=True))
        ex0 = -(lp[0, 0, 1] + lp[0, 1, 2]) / 2
        ex1 = -(lp[1, 0, 3] + lp[1, 1, 3] + lp[1, 2, 1]) / 3
        assert nll_loss(logits, targets, mask).value == pytest.approx((ex0 + ex1) / 2, abs=1e-14)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            nll_loss(N.Node(np.zeros((3, 4))), np.array([0, 1]))


def stub_model(logits, targets):
    """Perplexity only needs ``batch`` and ``loss``."""
    batch = SimpleNamespace(tgt_out=np.asarray(targets), tgt_mask=np.ones(np.shape(targets)))
    return SimpleNamespace(batch=lambda docs: batch, loss=lambda b: (None, N.Node(np.asarray(logits, dtype=float))))


class TestPerplexity:
    def test_uniform(self):
        assert perplexity(stub_model(np.zeros((1, 3, 7)), [[0, 1, 2]]), ["d"]) == pytest.approx(7.0, rel=1e-14)

    def test_perfect(self):
        logits = np.full((1, 2, 3), -1e9)
        logits[0, [0, 1], [2, 0]] = 0.0
        assert perplexity(stub_model(logits, [[2, 0]]), ["d"]) == 1.0

    def test_two_token_hand(self):
        model = stub_model([[[1.0, 2.0, 0.0], [0.0, 0.0, 3.0]]], [[1, 0]])
        assert perplexity(model, ["d"]) == pytest.approx(math.exp((NLL_STEP1 + NLL_STEP2) / 2), rel=1e-13)

    def test_uniform_real_model(self):
        docs = memorization_corpus(n_docs=6, vocab=10)
        model = build_model(small_config(use_e2t=False), docs)
        model.dec.Wo.value[:] = 0.0
        model.dec.bv.value[:] = 0.0
        assert perplexity(model, docs) == pytest.approx(len(model.tgt_vocab), rel=1e-12)


class TestEarlyStopping:
    def test_patience_rule(self):
        stopper = EarlyStopping(3)
        stops = [stopper.update(e, v) for e, v in enumerate([10, 9, 9.5, 9.6, 9.7], 1)]
        assert stops == [False, False, False, False, True]
        assert stopper.best_epoch == 2 and stopper.best == 9

    def test_train_returns_best_epoch_state(self, monkeypatch):
        import e2tsum.training as T
        seq = iter([10, 9, 9.5, 9.6, 9.7, 1.0])
        snapshots = {}

        def fake_ppl(model, docs):
            return next(seq)

        monkeypatch.setattr(T, "perplexity", fake_ppl)
        docs = memorization_corpus(n_docs=5, vocab=10)
        model = build_model(small_config(use_e2t=False, max_epochs=10), docs)

        def on_epoch(row, m):
            snapshots[row.epoch] = m.params.state_dict()

        result = train(model, docs, docs, on_epoch=on_epoch)
        assert [r.epoch for r in result.log] == [1, 2, 3, 4, 5]
        assert result.best_epoch == 2 and result.best_dev_ppl == 9
        for name, value in model.params.state_dict().items():
            np.testing.assert_array_equal(value, snapshots[2][name])


class TestSelectK:
    def test_example(self):
        ppl = dict(zip([1, 2, 5, 10, 20], [12, 11, 10.5, 11.2, 9.0]))
        seen = []
        k, hist = select_k([1, 2, 5, 10, 20], lambda k: seen.append(k) or ppl[k])
        assert k == 5 and seen == [1, 2, 5, 10]
        assert hist == [(1, 12), (2, 11), (5, 10.5), (10, 11.2)]

    def test_monotone_improvement(self):
        assert select_k([1, 2, 5, 10, 20], lambda k: 100 - k)[0] == 20

    def test_single(self):
        assert select_k([7], lambda k: 3.0)[0] == 7

    def test_not_increasing(self):
        with pytest.raises(ValueError):
            select_k([2, 1], lambda k: 1.0)


class TestTrain:
    def test_loss_decreases_first_steps(self):
        docs = memorization_corpus(n_docs=8, vocab=12)
        for use_e2t in (False, True):
            model = build_model(small_config(use_e2t=use_e2t), docs)
            batch = model.batch(docs)
            opt = N.AdadeltaState()
            rng = np.random.default_rng(0)
            losses = [train_step(model, batch, opt, rng) for _ in range(6)]
            assert all(b < a for a, b in zip(losses, losses[1:])), losses

    def test_deterministic_log(self):
        docs = topic_corpus(30, seed=4)
        logs = []
        for _ in range(2):
            model = build_model(small_config(dropout=0.3), docs)
            result = train(model, docs[:25], docs[25:])
            # wall-clock seconds are the only column allowed to differ
            logs.append([(r.epoch, r.train_loss, r.dev_ppl) for r in result.log])
        assert logs[0] == logs[1]

    def test_bit_deterministic_without_dropout(self):
        docs = topic_corpus(20, seed=5)
        states = []
        for _ in range(2):
            model = build_model(small_config(max_epochs=2), docs)
            train(model, docs[:15], docs[15:])
            states.append(model.params.state_dict())
        for name in states[0]:
            assert states[0][name].tobytes() == states[1][name].tobytes()

    def test_maxnorm_applied(self):
        docs = memorization_corpus(n_docs=5, vocab=10)
        model = build_model(small_config(maxnorm=0.5), docs)
        train_step(model, model.batch(docs), N.AdadeltaState(), np.random.default_rng(0), maxnorm=0.5)
        for name, node in model.params.items():
            if is_constrained(name):
                v = node.value.reshape(node.shape[0], -1) if node.ndim > 1 else node.value[None]
                assert np.all(np.linalg.norm(v, axis=1) <= 0.5 + 1e-12), name

    def test_divergence(self):
        docs = memorization_corpus(n_docs=5, vocab=10)
        model = build_model(small_config(use_e2t=False), docs)
        model.dec.bv.value[:] = np.nan
        with pytest.raises(TrainingDiverged):
            train_step(model, model.batch(docs), N.AdadeltaState(), np.random.default_rng(0))

    def test_empty(self):
        docs = memorization_corpus(n_docs=5, vocab=10)
        model = build_model(small_config(), docs)
        with pytest.raises(ValueError):
            train(model, docs, [])


class TestConfig:
    def test_full_size_defaults(self):
        c = TrainConfig()
        assert (c.word_dim, c.entity_dim, c.state_size, c.vocab_cap, c.beam_size, c.dropout) == (300, 1000, 500, 50000, 10, 0.5)
        assert c.filter_sizes == (3, 4, 5) and c.feature_maps == (400, 300, 300) and c.batch_size == 80

    def test_precedence(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# comment\nseed=3\nk=10\nfilter_sizes=2,3\nfeature_maps=4,4\n")
        c = load_config(path, ["k=5"], env={"E2T_SEED": "9"})
        assert (c.seed, c.k, c.filter_sizes) == (9, 5, (2, 3))
        assert load_config(path, ["seed=11"], env={"E2T_SEED": "9"}).seed == 11

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            apply_overrides(TrainConfig(), ["nope=1"])

    def test_invalid_values(self):
        for pair in ("dropout=1.0", "encoder=lstm", "k=0", "gate=maybe"):
            with pytest.raises(ConfigError):
                apply_overrides(TrainConfig(), [pair])

    def test_text_round_trip(self, tmp_path):
        c = small_config(gate=False, pooling="soft")
        (tmp_path / "c.cfg").write_text(c.to_text())
        assert load_config(tmp_path / "c.cfg", env={}) == c
