"""Seeded toy corpora for sanity checks at desk scale."""
from __future__ import annotations

import numpy as np

from .corpus import AnnotatedDocument, EntityMention


def memorization_corpus(n_docs=50, vocab=40, src_len=(5, 9), tgt_len=(2, 5), seed=0):
    """Random source/target pairs over a small vocabulary (for overfitting)."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab)]
    docs = []
    for i in range(n_docs):
        src = [words[j] for j in rng.integers(0, vocab, size=rng.integers(*src_len))]
        tgt = [words[j] for j in rng.integers(0, vocab, size=rng.integers(*tgt_len))]
        ents = [EntityMention(f"E_{src[0]}", 0, 1)]
        docs.append(AnnotatedDocument(f"m{i}", src, tgt, ents))
    return docs


def topic_corpus(n_docs, n_entities=24, ambiguity=4, n_fillers=30, n_categories=4, seed=0):
    """Documents whose summary is a function of the linked entities.

    Every document mentions one dominant entity twice and 1-3 distractor
    entities once.  The target is ``[name(dominant), category(dominant)]``.
    Surface words are shared by groups of ``ambiguity`` entities, so the
    text alone cannot tell which entity of a group was meant; the linked
    entity ids can.
    """
    rng = np.random.default_rng(seed)
    fillers = [f"f{i}" for i in range(n_fillers)]
    docs = []
    for i in range(n_docs):
        dominant = int(rng.integers(n_entities))
        others = [int(e) for e in rng.choice(
            [e for e in range(n_entities) if e != dominant], size=int(rng.integers(1, 4)), replace=False)]
        mentions = [dominant, dominant] + others
        rng.shuffle(mentions)
        src, ents = [], []
        for e in mentions:
            src.extend(fillers[j] for j in rng.integers(0, n_fillers, size=rng.integers(0, 3)))
            ents.append(EntityMention(f"ENT_{e:02d}", len(src), len(src) + 1))
            src.append(f"s{e // ambiguity}")
        src.extend(fillers[j] for j in rng.integers(0, n_fillers, size=rng.integers(1, 3)))
        tgt = [f"n{dominant:02d}", f"c{dominant % n_categories}"]
        docs.append(AnnotatedDocument(f"t{i}", src, tgt, ents))
    return docs
