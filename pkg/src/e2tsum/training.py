"""Teacher-forced NLL training with Adadelta + max-norm, early stopping on
dev perplexity, and the incremental search for the firm-attention k."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .numerics import (
    AdadeltaState,
    adadelta_step,
    backward,
    log_softmax,
    maxnorm_constraint,
    mean,
    mul,
    no_grad,
    pick,
    sum_,
)

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def nll_loss(logits, targets, mask=None):
    """Mean over examples of the per-example mean NLL of non-pad targets.

    ``logits`` is ``(..., T, V)`` and ``targets`` ``(..., T)``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.shape[:-1] != targets.shape:
        raise ValueError(f"nll_loss: logits {logits.shape} do not match targets {targets.shape}")
    mask = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=np.float64)
    nll = -pick(log_softmax(logits), targets)
    counts = np.maximum(mask.sum(axis=-1), 1.0)
    per_example = sum_(mul(nll, mask / counts[..., None]), axis=-1)
    return mean(per_example) if per_example.ndim else per_example


def _token_nll(model, docs, batch_size=64):
    """(summed NLL, token count, correct argmax count) under teacher forcing."""
    total, count, correct = 0.0, 0, 0
    with no_grad():
        for i in range(0, len(docs), batch_size):
            b = model.batch(docs[i:i + batch_size])
            _, logits = model.loss(b)
            lp = log_softmax(logits).value
            nll = -np.take_along_axis(lp, b.tgt_out[..., None], axis=-1)[..., 0]
            total += float((nll * b.tgt_mask).sum())
            count += int(b.tgt_mask.sum())
            correct += int(((lp.argmax(axis=-1) == b.tgt_out) * b.tgt_mask).sum())
    return total, count, correct


def perplexity(model, docs):
    if not docs:
        raise ValueError("perplexity of an empty corpus")
    total, count, _ = _token_nll(model, docs)
    return math.exp(total / count)


def token_accuracy(model, docs):
    _, count, correct = _token_nll(model, docs)
    return correct / count


class EarlyStopping:
    """Stop once the metric fails to improve ``patience`` times in a row."""

    def __init__(self, patience):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = None
        self.bad = 0

    def update(self, epoch, value):
        if value < self.best:
            self.best, self.best_epoch, self.bad = value, epoch, 0
        else:
            self.bad += 1
        return self.bad >= self.patience


@dataclass
class LogRow:
    epoch: int
    train_loss: float
    dev_ppl: float
    seconds: float

    def to_tsv(self):
        return f"{self.epoch}\t{self.train_loss:.6f}\t{self.dev_ppl:.6f}\t{self.seconds:.2f}"


@dataclass
class TrainResult:
    best_epoch: int
    best_dev_ppl: float
    state: dict
    log: list = field(default_factory=list)

    def log_text(self):
        return "".join(row.to_tsv() + "\n" for row in self.log)


def is_constrained(name):
    # embedding tables are lookups, not incoming-weight vectors
    return not name.startswith("emb.")


def train_step(model, batch, opt_state, rng, maxnorm=3.0):
    params = model.params
    params.zero_grad()
    loss, _ = model.loss(batch, train=True, rng=rng)
    value = float(loss.value)
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite training loss {value}")
    grads = backward(loss)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient for {name}")
    adadelta_step(dict(params.items()), grads, opt_state)
    for name, node in params.items():
        if is_constrained(name):
            maxnorm_constraint(node, maxnorm)
    return value


def dev_subset(docs, size, seed):
    if size <= 0 or len(docs) <= size:
        return list(docs)
    idx = np.sort(np.random.default_rng(seed).choice(len(docs), size=size, replace=False))
    return [docs[i] for i in idx]


def train(model, train_docs, dev_docs, config=None, on_epoch=None):
    """Train ``model`` in place; leaves it holding the best-dev parameters."""
    config = config or model.config
    if not train_docs or not dev_docs:
        raise ValueError("train and dev corpora must be non-empty")
    rng = np.random.default_rng(config.seed)
    dev = dev_subset(dev_docs, config.dev_subset, config.seed)
    opt = AdadeltaState(rho=config.rho, epsilon=config.epsilon)
    stopper = EarlyStopping(config.patience)
    best_state = model.params.state_dict()
    rows = []
    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(len(train_docs))
        losses = []
        for i in range(0, len(order), config.batch_size):
            batch = model.batch([train_docs[j] for j in order[i:i + config.batch_size]])
            losses.append(train_step(model, batch, opt, rng, config.maxnorm))
        ppl = perplexity(model, dev)
        row = LogRow(epoch, float(np.mean(losses)), ppl, time.perf_counter() - start)
        rows.append(row)
        log.info("epoch %d loss %.4f dev ppl %.4f", epoch, row.train_loss, ppl)
        if on_epoch is not None:
            on_epoch(row, model)
        stop = stopper.update(epoch, ppl)
        if stopper.best_epoch == epoch:
            best_state = model.params.state_dict()
        if stop:
            break
    model.params.load_state_dict(best_state)
    return TrainResult(stopper.best_epoch, stopper.best, best_state, rows)


def select_k(candidates, evaluate):
    """Try increasing ``k`` until dev perplexity gets worse; keep the previous.

    ``evaluate(k)`` returns the dev perplexity for that k.  Returns
    ``(chosen_k, [(k, ppl), ...])``.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no k candidates")
    if any(b <= a for a, b in zip(candidates, candidates[1:])):
        raise ValueError("k candidates must be strictly increasing")
    history = []
    for k in candidates:
        ppl = evaluate(k)
        if history and ppl > history[-1][1]:
            history.append((k, ppl))
            return history[-2][0], history
        history.append((k, ppl))
    return candidates[-1], history


def tune_k(config, train_docs, dev_docs, candidates=None):
    """Train one budget-capped model per candidate k (see :func:`select_k`)."""
    from .model import build_model

    def evaluate(k):
        cfg = config.replace(k=k, pooling="firm", use_e2t=True, max_epochs=config.tune_k_epochs)
        model = build_model(cfg, train_docs)
        return train(model, train_docs, dev_docs, cfg).best_dev_ppl

    return select_k(candidates or config.k_candidates, evaluate)
