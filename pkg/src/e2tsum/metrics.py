"""ROUGE-N and ROUGE-L (full-length F1) on pre-tokenized text."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, hits, cand_total, ref_total):
        p = hits / cand_total if cand_total else 0.0
        r = hits / ref_total if ref_total else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n=1):
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    hits = sum((cand & ref).values())
    return RougeScore.from_counts(hits, sum(cand.values()), sum(ref.values()))


def lcs_length(a, b):
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference):
    if not candidate or not reference:
        return RougeScore(0.0, 0.0, 0.0)
    return RougeScore.from_counts(lcs_length(candidate, reference), len(candidate), len(reference))


@dataclass
class RougeReport:
    rouge_1: float
    rouge_2: float
    rouge_l: float
    count: int

    HEADER = "RG-1\tRG-2\tRG-L"

    def to_tsv(self):
        return f"{self.HEADER}\n{self.rouge_1:.2f}\t{self.rouge_2:.2f}\t{self.rouge_l:.2f}\n"

    def as_dict(self):
        return {"RG-1": self.rouge_1, "RG-2": self.rouge_2, "RG-L": self.rouge_l}


def score_pairs(pairs):
    """Corpus means (x100) of RG-1/RG-2/RG-L F1 over (candidate, reference) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("no pairs to score")
    r1 = [rouge_n(c, r, 1).f1 for c, r in pairs]
    r2 = [rouge_n(c, r, 2).f1 for c, r in pairs]
    rl = [rouge_l(c, r).f1 for c, r in pairs]
    return RougeReport(100 * float(np.mean(r1)), 100 * float(np.mean(r2)), 100 * float(np.mean(rl)), len(pairs))


def evaluate_corpus(docs, summarize):
    """Decode every document with ``summarize(doc) -> tokens`` and score it
    against its target.  Returns (report, candidates)."""
    if not docs:
        raise ValueError("empty test corpus")
    candidates = [summarize(d) for d in docs]
    return score_pairs(zip(candidates, (d.target_tokens for d in docs))), candidates
