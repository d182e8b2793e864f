"""The full summarizer: base attentive seq2seq with an optional
Entity2Topic module, batching, and on-disk model directories."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import corpus as C
from .config import TrainConfig, load_config
from .decoder import DecoderParams, DecoderState, attention_keys, decoder_step, initial_state
from .encoder import EncoderParams, InitProjection, encode_text, init_decoder_state
from .entity2topic import E2TParams, entity2topic
from .numerics import Node, Parameters, dropout, log_softmax, no_grad, stack, take_rows
from .search import beam_search
from .training import nll_loss


@dataclass
class Batch:
    src: np.ndarray
    src_mask: np.ndarray
    ent: np.ndarray
    ent_mask: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self):
        return self.src.shape[0]


def _pad(seqs, min_len=1):
    n = max(min_len, max((len(s) for s in seqs), default=0))
    ids = np.full((len(seqs), n), C.PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), n))
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def make_batch(docs, src_vocab, tgt_vocab, ent_vocab):
    src, src_mask = _pad([src_vocab.encode(d.source_tokens) for d in docs])
    ent, ent_mask = _pad([ent_vocab.encode(d.entity_ids) for d in docs])
    tgt = [tgt_vocab.encode(d.target_tokens) for d in docs]
    tgt_in, _ = _pad([[C.BOS_ID] + t for t in tgt])
    tgt_out, tgt_mask = _pad([t + [C.EOS_ID] for t in tgt])
    return Batch(src, src_mask, ent, ent_mask, tgt_in, tgt_out, tgt_mask)


class Summarizer:
    def __init__(self, config, src_vocab, tgt_vocab, ent_vocab, word_vectors=None, entity_vectors=None):
        self.config = config
        self.src_vocab, self.tgt_vocab, self.ent_vocab = src_vocab, tgt_vocab, ent_vocab
        rng = np.random.default_rng(config.seed)
        cfg = config
        P = self.params = Parameters()

        def table(name, vocab, dim, vectors):
            if vectors is not None:
                if vectors.shape != (len(vocab), dim):
                    raise ValueError(f"{name}: pretrained shape {vectors.shape} != {(len(vocab), dim)}")
                return P.add(name, vectors)
            return P.add(name, rng.uniform(-0.1, 0.1, size=(len(vocab), dim)))

        self.src_embed = table("emb.src", src_vocab, cfg.word_dim, word_vectors[0] if word_vectors else None)
        tgt_embed = table("emb.tgt", tgt_vocab, cfg.word_dim, word_vectors[1] if word_vectors else None)
        S = cfg.state_size
        self.enc = EncoderParams.create(P, cfg.word_dim, S, rng)
        self.init = InitProjection.create(P, 2 * S, S, rng)
        topic_size = 0
        self.e2t = None
        if cfg.use_e2t:
            self.ent_embed = table("emb.ent", ent_vocab, cfg.entity_dim, entity_vectors)
            self.e2t = E2TParams.create(
                P, entity_dim=cfg.entity_dim, context_size=2 * S, rng=rng, encoder=cfg.encoder,
                entity_state=cfg.entity_state_size, filter_sizes=cfg.filter_sizes,
                feature_maps=cfg.feature_maps, topic_size=cfg.topic_size or None,
                vector_gate=cfg.vector_gate,
            )
            topic_size = self.e2t.topic_size
        self.dec = DecoderParams.create(
            P, vocab_size=len(tgt_vocab), word_dim=cfg.word_dim, state_size=S, context_size=2 * S,
            topic_size=topic_size, rng=rng, embed=tgt_embed,
        )

    @property
    def k(self):
        return self.config.k if self.config.pooling == "firm" else None

    def _dropper(self, train, rng):
        rate = self.config.dropout
        if not train or rate == 0.0:
            return None
        return lambda t: dropout(t, rate, True, rng)

    # ------------------------------------------------------------ forward
    def encode(self, batch, drop=None):
        return encode_text(batch.src, self.src_embed, self.enc, mask=batch.src_mask, drop=drop)

    def topic(self, batch, s, drop=None):
        if self.e2t is None:
            return None
        E = take_rows(self.ent_embed, batch.ent)
        if drop is not None:
            E = drop(E)
        return entity2topic(E, s, self.e2t, k=self.k, gate=self.config.gate, mask=batch.ent_mask, drop=drop)

    def step_logits(self, batch, train=False, rng=None):
        """Teacher-forced logits, one ``(B, V)`` node per target position."""
        drop = self._dropper(train, rng)
        enc = self.encode(batch, drop)
        topic = self.topic(batch, enc.s, drop)
        t = topic.t if topic is not None else None
        state = initial_state(init_decoder_state(enc.s, self.init), enc.H)
        keys = attention_keys(enc.H, self.dec.attn)
        out = []
        for step in range(batch.tgt_in.shape[1]):
            state, logits, _ = decoder_step(batch.tgt_in[:, step], state, t, enc.H, self.dec,
                                            keys=keys, mask=batch.src_mask, drop=drop)
            out.append(logits)
        return out

    def loss(self, batch, train=False, rng=None):
        logits = stack(self.step_logits(batch, train, rng), axis=1)
        return nll_loss(logits, batch.tgt_out, batch.tgt_mask), logits

    def batch(self, docs):
        return make_batch(docs, self.src_vocab, self.tgt_vocab, self.ent_vocab)

    # ------------------------------------------------------------ decoding
    def decoder_fn(self, doc):
        """(step, initial state) for searching summaries of ``doc``."""
        b = self.batch([doc])
        with no_grad():
            enc = self.encode(b)
            topic = self.topic(b, enc.s)
            H = Node(enc.H.value[0])
            keys = attention_keys(H, self.dec.attn)
            layers = [Node(h.value[0]) for h in init_decoder_state(enc.s, self.init)]
        t = topic.t.value[0] if topic is not None else None
        init = DecoderState(layers, Node(np.zeros(H.shape[-1])))

        def step(prev_tokens, states):
            n = len(states)
            stacked = DecoderState(
                [Node(np.stack([s.layers[i].value for s in states])) for i in range(len(states[0].layers))],
                Node(np.stack([s.context.value for s in states])),
            )
            topic_rows = None if t is None else Node(np.broadcast_to(t, (n, t.shape[0])))
            with no_grad():
                new, logits, _ = decoder_step(prev_tokens, stacked, topic_rows, H, self.dec, keys=keys)
                logp = log_softmax(logits).value
            out = [
                DecoderState([Node(h.value[j]) for h in new.layers], Node(new.context.value[j]))
                for j in range(n)
            ]
            return logp, out

        return step, init

    def summarize_ids(self, doc, beam=None, max_len=None):
        beam = beam or self.config.beam_size
        max_len = max_len or self.config.max_decode_len
        step, init = self.decoder_fn(doc)
        kw = dict(bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=max_len, banned=(C.PAD_ID, C.BOS_ID))
        return beam_search(step, init, beam=beam, length_norm=self.config.length_norm, **kw).tokens

    def summarize(self, doc, beam=None, max_len=None):
        return self.tgt_vocab.decode(self.summarize_ids(doc, beam, max_len))

    # ------------------------------------------------------------ persistence
    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        self.params.save(os.path.join(directory, "model.ckpt"))
        with open(os.path.join(directory, "config.cfg"), "w", encoding="utf-8") as fh:
            fh.write(self.config.to_text())
        self.src_vocab.save(os.path.join(directory, "src.vocab"))
        self.tgt_vocab.save(os.path.join(directory, "tgt.vocab"))
        self.ent_vocab.save(os.path.join(directory, "ent.vocab"))

    @classmethod
    def load(cls, directory):
        config = load_config(os.path.join(directory, "config.cfg"), env={})
        # skip pretrained-vector reads; the checkpoint supersedes them
        vocabs = [C.Vocabulary.load(os.path.join(directory, f"{n}.vocab")) for n in ("src", "tgt", "ent")]
        model = cls(config, *vocabs)
        model.params.load(os.path.join(directory, "model.ckpt"))
        return model


def build_model(config, train_docs):
    """Vocabularies (and pretrained vectors, if configured) from a corpus."""
    src_vocab, tgt_vocab, ent_vocab = C.build_vocabs(train_docs, config.vocab_cap)
    rng = np.random.default_rng(config.seed + 7919)
    word_vectors = entity_vectors = None
    if config.word_embeddings:
        word_vectors = (
            C.load_embeddings(config.word_embeddings, src_vocab, config.word_dim, rng).vectors,
            C.load_embeddings(config.word_embeddings, tgt_vocab, config.word_dim, rng).vectors,
        )
    if config.entity_embeddings and config.use_e2t:
        entity_vectors = C.load_embeddings(config.entity_embeddings, ent_vocab, config.entity_dim, rng).vectors
    return Summarizer(config, src_vocab, tgt_vocab, ent_vocab, word_vectors, entity_vectors)


__all__ = ["Batch", "Summarizer", "TrainConfig", "build_model", "make_batch"]
