"""Entity-annotated corpora, vocabularies, pretrained embeddings, the
gazetteer annotator and dataset statistics."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
RESERVED = (PAD, UNK, BOS, EOS)


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class EntityMention:
    entity_id: str
    start: int
    end: int


@dataclass
class AnnotatedDocument:
    id: str
    source_tokens: list
    target_tokens: list
    entities: list = field(default_factory=list)

    def to_json(self):
        return {
            "id": self.id,
            "source_tokens": list(self.source_tokens),
            "target_tokens": list(self.target_tokens),
            "entities": [{"id": m.entity_id, "start": m.start, "end": m.end} for m in self.entities],
        }

    @property
    def entity_ids(self):
        return [m.entity_id for m in self.entities]


def validate_mentions(mentions, n_tokens):
    """Raise CorpusError unless mentions are in-bounds, sorted and disjoint."""
    prev_end = 0
    for m in mentions:
        if not (0 <= m.start < m.end <= n_tokens):
            raise CorpusError(f"entity {m.entity_id!r} span [{m.start},{m.end}) outside source of length {n_tokens}")
        if m.start < prev_end:
            raise CorpusError(f"entity {m.entity_id!r} span [{m.start},{m.end}) overlaps or is out of order")
        prev_end = m.end


def parse_record(obj, require_target=True):
    try:
        doc_id = str(obj["id"])
        src = [str(t) for t in obj["source_tokens"]]
        tgt = [str(t) for t in obj.get("target_tokens", [])]
        ents = [EntityMention(str(e["id"]), int(e["start"]), int(e["end"])) for e in obj.get("entities", [])]
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"missing or malformed field: {exc}") from None
    if not src:
        raise CorpusError("empty source_tokens")
    if require_target and not tgt:
        raise CorpusError("empty target_tokens")
    validate_mentions(ents, len(src))
    return AnnotatedDocument(doc_id, src, tgt, ents)


def load_corpus(path, require_target=True):
    docs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                docs.append(parse_record(json.loads(line), require_target))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return docs


def save_corpus(path, docs):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


class Vocabulary:
    """Token <-> id map with the four reserved ids first."""

    def __init__(self, tokens=()):
        self.itos = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def lookup(self, token):
        return self.stoi.get(token, UNK_ID)

    def encode(self, tokens):
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids, strip=True):
        out = []
        for i in ids:
            if strip and i == EOS_ID:
                break
            if strip and i in (PAD_ID, BOS_ID):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for tok in self.itos[len(RESERVED):]:
                fh.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocab(sequences, cap=50000):
    """Keep the ``cap - 4`` most frequent tokens; ties go lexicographically."""
    if cap <= len(RESERVED):
        raise ValueError(f"vocabulary cap must exceed {len(RESERVED)}")
    counts = Counter()
    for seq in sequences:
        counts.update(seq)
    for tok in RESERVED:
        counts.pop(tok, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([tok for tok, _ in ranked[: cap - len(RESERVED)]])


def build_vocabs(docs, cap=50000):
    """Source, target and entity vocabularies for a corpus."""
    return (
        build_vocab((d.source_tokens for d in docs), cap),
        build_vocab((d.target_tokens for d in docs), cap),
        build_vocab((d.entity_ids for d in docs), cap),
    )


@dataclass
class EmbeddingMatrix:
    vectors: np.ndarray
    coverage: float

    @property
    def dim(self):
        return self.vectors.shape[1]


def load_embeddings(path, vocab, dim, rng, scale=0.1):
    """Read ``token v1 ... vd`` lines into a vocab-aligned matrix.

    Rows absent from the file keep a uniform(-scale, scale) draw.
    """
    vectors = rng.uniform(-scale, scale, size=(len(vocab), dim))
    vectors[PAD_ID] = 0.0
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if not parts or parts == [""]:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise CorpusError(f"{path}:{lineno}: expected {dim} values, found {len(values)}")
            idx = vocab.stoi.get(token)
            if idx is None:
                continue
            try:
                vectors[idx] = [float(v) for v in values]
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-numeric value") from None
            seen.add(idx)
    return EmbeddingMatrix(vectors, len(seen) / len(vocab))


class Gazetteer:
    """Case-insensitive surface form -> entity id lookup."""

    def __init__(self, entries=None):
        self.entries = {}
        self.max_len = 0
        for surface, entity_id in (entries or {}).items():
            self.add(surface, entity_id)

    def add(self, surface, entity_id):
        key = tuple(t.lower() for t in (surface.split() if isinstance(surface, str) else surface))
        if not key:
            raise ValueError("gazetteer surface form must be non-empty")
        self.entries[key] = entity_id
        self.max_len = max(self.max_len, len(key))

    @classmethod
    def load(cls, path):
        """Tab-separated ``surface form<TAB>entity id`` lines."""
        gaz = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or not parts[0].strip():
                    raise CorpusError(f"{path}:{lineno}: expected 'surface<TAB>entity_id'")
                gaz.add(parts[0], parts[1].strip())
        return gaz


def annotate_gazetteer(tokens, gazetteer):
    """Greedy left-to-right longest match."""
    lowered = [t.lower() for t in tokens]
    mentions, i = [], 0
    while i < len(lowered):
        for span in range(min(gazetteer.max_len, len(lowered) - i), 0, -1):
            entity = gazetteer.entries.get(tuple(lowered[i:i + span]))
            if entity is not None:
                mentions.append(EntityMention(entity, i, i + span))
                i += span
                break
        else:
            i += 1
    return mentions


@dataclass
class StatsReport:
    num_data: int
    avg_input_word: float
    avg_output_word: float
    min_input_entity: int
    max_input_entity: int
    avg_input_entity: float

    ROWS = (
        ("num(data)", "num_data"),
        ("avg(inputWord)", "avg_input_word"),
        ("avg(outputWord)", "avg_output_word"),
        ("min(inputEntity)", "min_input_entity"),
        ("max(inputEntity)", "max_input_entity"),
        ("avg(inputEntity)", "avg_input_entity"),
    )

    def to_tsv(self):
        lines = []
        for label, attr in self.ROWS:
            v = getattr(self, attr)
            lines.append(f"{label}\t{v:.1f}" if isinstance(v, float) else f"{label}\t{v}")
        return "\n".join(lines) + "\n"


def corpus_stats(docs):
    if not docs:
        raise CorpusError("cannot compute statistics of an empty corpus")
    ents = [len(d.entities) for d in docs]
    n = len(docs)
    return StatsReport(
        num_data=n,
        avg_input_word=float(np.mean([len(d.source_tokens) for d in docs])),
        avg_output_word=float(np.mean([len(d.target_tokens) for d in docs])),
        min_input_entity=min(ents),
        max_input_entity=max(ents),
        avg_input_entity=sum(ents) / n,
    )
