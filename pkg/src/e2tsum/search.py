"""Beam search and greedy decoding over an abstract step function.

``step(prev_tokens, states) -> (log_probs, new_states)`` advances a list of
hypotheses at once: ``prev_tokens`` is an int array ``(n,)``, ``log_probs`` is
``(n, V)``, and ``new_states`` is a list of ``n`` opaque states.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Hypothesis:
    tokens: list
    score: float
    state: object = None
    finished: bool = False

    def normalized(self, length_norm=False):
        if length_norm and self.tokens:
            return self.score / len(self.tokens)
        return self.score


def _masked(logp, banned):
    logp = np.array(logp, dtype=np.float64)
    if banned:
        logp[:, list(banned)] = -np.inf
    return logp


def beam_search(step, init_state, *, bos_id, eos_id, max_len, beam=10, banned=(), length_norm=False):
    """Return the best finished :class:`Hypothesis`.

    Each round expands every live hypothesis over the vocabulary and keeps the
    ``beam`` best expansions by total log-probability (ties: lower token id,
    then earlier hypothesis).  Expansions ending in EOS, or reaching
    ``max_len`` tokens, retire to the finished pool.
    """
    if beam < 1 or max_len < 1:
        raise ValueError("beam and max_len must be >= 1")
    live = [Hypothesis([], 0.0, init_state)]
    finished = []
    for t in range(max_len):
        prev = np.array([h.tokens[-1] if h.tokens else bos_id for h in live], dtype=np.int64)
        logp, states = step(prev, [h.state for h in live])
        logp = _masked(logp, banned)
        total = np.array([h.score for h in live])[:, None] + logp
        n, V = total.shape
        hyp_idx, tok = np.divmod(np.arange(n * V), V)
        flat = total.ravel()
        order = np.lexsort((hyp_idx, tok, -flat))
        order = order[np.isfinite(flat[order])][:beam]
        next_live = []
        for j in order:
            h, y = int(hyp_idx[j]), int(tok[j])
            done = y == eos_id or t == max_len - 1
            cand = Hypothesis(live[h].tokens + [y], float(flat[j]), states[h], done)
            (finished if done else next_live).append(cand)
        live = next_live
        if not live:
            break
        if not length_norm and finished:
            # scores only decrease, so nothing live can overtake the best finished
            if max(f.score for f in finished) >= max(h.score for h in live):
                break
    if not finished:
        raise RuntimeError("beam search produced no hypothesis (every token banned?)")
    best = finished[0]
    for f in finished[1:]:
        if f.normalized(length_norm) > best.normalized(length_norm):
            best = f
    return best


def greedy_decode(step, init_state, *, bos_id, eos_id, max_len, banned=()):
    tokens, score, state = [], 0.0, init_state
    for _ in range(max_len):
        logp, states = step(np.array([tokens[-1] if tokens else bos_id]), [state])
        logp = _masked(logp, banned)[0]
        y = int(np.argmax(logp))
        tokens.append(y)
        score += float(logp[y])
        state = states[0]
        if y == eos_id:
            break
    return Hypothesis(tokens, score, state, True)


def strip_eos(tokens, eos_id):
    return tokens[: tokens.index(eos_id)] if eos_id in tokens else list(tokens)
