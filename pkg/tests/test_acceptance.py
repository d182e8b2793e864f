"""One test per acceptance criterion.  Each records a PASS/FAIL line that is
printed in the terminal summary, then asserts."""
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE
from oracles import brute_ngram_hits, exhaustive_decode, f1_from_counts, memo_lcs

from e2tsum import corpus as C
from e2tsum import numerics as N
from e2tsum.config import TrainConfig
from e2tsum.entity2topic import E2TParams, attention_scores, conv_padding, encode_entities_cnn, firm_attention_pool, soft_attention_pool
from e2tsum.gradcheck import LOSS_TOL, OP_TOL, run_suite
from e2tsum.metrics import lcs_length, rouge_l, rouge_n
from e2tsum.model import Summarizer, build_model
from e2tsum.search import beam_search, greedy_decode
from e2tsum.synthetic import memorization_corpus, topic_corpus
from e2tsum.training import perplexity, select_k, token_accuracy, train, tune_k


def report(name, passed, detail):
    ACCEPTANCE.append((name, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    assert passed, detail


def test_gradient_suite():
    results, seconds = run_suite(seed=0)
    ops = [r for r in results if r.tol == OP_TOL]
    losses = [r for r in results if r.tol == LOSS_TOL]
    failed = [r.name for r in results if not r.passed]
    worst_op = max(r.error for r in ops)
    worst_loss = max(r.error for r in losses)
    ok = not failed and worst_op <= 1e-4 and worst_loss <= 1e-3 and seconds < 120
    report("gradient suite", ok,
           f"{len(ops)} ops max {worst_op:.2e} (<=1e-4), {len(losses)} losses max {worst_loss:.2e} (<=1e-3), "
           f"{seconds:.1f}s (<120s){'; failed ' + ','.join(failed) if failed else ''}")


def test_firm_attention_laws():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst_soft = worst_argmax = worst_mass = 0.0
    for i in range(1000):
        m, de, ctx = int(rng.integers(1, 13)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        p = E2TParams.create(N.Parameters(), entity_dim=2, context_size=ctx, rng=rng, filter_sizes=(3,),
                             feature_maps=(2,), topic_size=de, attn_size=int(rng.integers(1, 6)))
        p.va.value = rng.normal(scale=3.0, size=p.va.shape)
        E_t, s = rng.normal(size=(m, de)), rng.normal(size=ctx)
        soft = soft_attention_pool(E_t, s, p)
        big = firm_attention_pool(E_t, s, m + int(rng.integers(0, 5)), p)
        worst_soft = max(worst_soft, np.abs(big.t.value - soft.t.value).max(), np.abs(big.weights.value - soft.weights.value).max())
        G = attention_scores(N.Node(E_t), N.Node(s), p).value
        one = firm_attention_pool(E_t, s, 1, p)
        worst_argmax = max(worst_argmax, np.abs(one.t.value - E_t[int(np.argmax(G))]).max())
        k = int(rng.integers(1, m + 1))
        a = firm_attention_pool(E_t, s, k, p).weights.value
        outside = np.argsort(-G, kind="stable")[k:]
        if outside.size:
            worst_mass = max(worst_mass, a[outside].max())
    seconds = time.perf_counter() - start
    ok = worst_soft <= 1e-12 and worst_argmax <= 1e-12 and worst_mass <= 1e-30 and seconds < 60
    report("firm-attention laws", ok,
           f"1000 instances: |firm(k>=m)-soft| {worst_soft:.1e}, |k=1 - argmax| {worst_argmax:.1e}, "
           f"non-top-k mass {worst_mass:.1e}, {seconds:.1f}s (<60s)")


def test_cnn_padding():
    rng = np.random.default_rng(0)
    bad = []
    for h in (2, 3, 4, 5):
        left, right = conv_padding(h)
        for m in range(1, 11):
            P = N.Parameters()
            W, b = P.matrix("W", 3, 2 * h, rng), P.add("b", rng.normal(size=3))
            E = rng.normal(size=(m, 2))
            out = encode_entities_cnn(E, [(h, W, b)]).value
            padded = np.vstack([np.zeros((left, 2)), E, np.zeros((right, 2))])
            oracle = np.array([np.tanh(W.value @ padded[i:i + h].ravel() + b.value) for i in range(m)])
            if out.shape != (m, 3) or left + right != h - 1 or not np.allclose(out, oracle, atol=1e-14, rtol=0):
                bad.append((h, m))
    p = E2TParams.create(N.Parameters(), entity_dim=4, context_size=2, rng=rng, filter_sizes=(3, 4, 5),
                         feature_maps=(400, 300, 300))
    width = encode_entities_cnn(rng.normal(size=(6, 4)), p.filters).shape[-1]
    report("CNN padding", not bad and width == 1000,
           f"h in 2..5 x m in 1..10 length-preserving, windows match oracle (violations {bad}); h=3,4,5 maps 400,300,300 -> {width}")


def test_rouge_oracles():
    rng = np.random.default_rng(7)
    mismatches = 0
    for _ in range(200):
        a = list(rng.choice(list("abcde"), size=rng.integers(0, 9)))
        b = list(rng.choice(list("abcde"), size=rng.integers(0, 9)))
        for n in (1, 2):
            s = rouge_n(a, b, n)
            mismatches += (s.precision, s.recall, s.f1) != f1_from_counts(*brute_ngram_hits(a, b, n))
        L = memo_lcs(a, b)
        s = rouge_l(a, b)
        expected = f1_from_counts(L, len(a), len(b)) if a and b else (0.0, 0.0, 0.0)
        mismatches += lcs_length(a, b) != L or (s.precision, s.recall, s.f1) != expected
    x = list("abcab")
    ident = (rouge_n(x, x, 1).f1, rouge_n(x, x, 2).f1, rouge_l(x, x).f1)
    report("ROUGE oracles", mismatches == 0 and ident == (1.0, 1.0, 1.0),
           f"200 pairs len<=8, exact mismatches {mismatches}; identical pair {ident}")


def _oracle_model(seed):
    docs = [C.AnnotatedDocument("d", ["a", "b", "c", "a"], ["x"], [C.EntityMention("E1", 0, 1), C.EntityMention("E2", 2, 3)])]
    cfg = TrainConfig(seed=seed, word_dim=4, entity_dim=4, state_size=5, entity_state_size=3, filter_sizes=(3,),
                      feature_maps=(4,), k=1, dropout=0.0)
    src, _, ent = C.build_vocabs(docs)
    model = Summarizer(cfg, src, C.Vocabulary(), ent)
    rng = np.random.default_rng(seed)
    # sharpen the output distribution so the search is not trivially flat
    model.dec.Wo.value = rng.normal(scale=3.0, size=model.dec.Wo.shape)
    return model, docs[0]


def test_beam_oracle():
    mismatches, greedy_mismatch = [], []
    for seed in range(50):
        model, doc = _oracle_model(seed)
        step, init = model.decoder_fn(doc)
        V = len(model.tgt_vocab)
        max_len = 1 + seed % 3
        best = beam_search(step, init, bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=max_len, beam=64)
        tokens, _ = exhaustive_decode(step, init, vocab_size=V, bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=max_len)
        if best.tokens != tokens:
            mismatches.append(seed)
        b1 = beam_search(step, init, bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=3, beam=1)
        g = greedy_decode(step, init, bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=3)
        if b1.tokens != g.tokens:
            greedy_mismatch.append(seed)
    report("beam-search oracle", not mismatches and not greedy_mismatch,
           f"vocab 4, max_len 1..3, beam 64 vs exhaustive on 50 models: mismatches {mismatches}; "
           f"beam-1 vs greedy mismatches {greedy_mismatch}")


@pytest.mark.slow
def test_overfit():
    docs = memorization_corpus(n_docs=50, vocab=40, seed=0)
    cfg = TrainConfig(word_dim=32, entity_dim=16, state_size=32, entity_state_size=16, filter_sizes=(3,),
                      feature_maps=(16,), batch_size=10, dropout=0.0, max_epochs=200, patience=200, k=1)
    model = build_model(cfg, docs)
    reached = {}
    start = time.perf_counter()

    def on_epoch(row, m):
        if "epoch" not in reached:
            acc = token_accuracy(m, docs)
            if acc >= 0.99:
                reached.update(epoch=row.epoch, acc=acc)
                raise StopIteration

    try:
        train(model, docs, docs, cfg, on_epoch=on_epoch)
    except StopIteration:
        pass
    seconds = time.perf_counter() - start
    ok = bool(reached) and seconds < 600 and len(model.tgt_vocab) <= 64
    detail = (f"token accuracy {reached['acc']:.3f} at epoch {reached['epoch']}" if reached
              else f"accuracy {token_accuracy(model, docs):.3f} after 200 epochs")
    report("overfit check", ok, f"{detail} (>=0.99 within 200), vocab {len(model.tgt_vocab)}, {seconds:.0f}s (<600s)")


@pytest.mark.slow
def test_e2t_benefit():
    train_docs = topic_corpus(2000, seed=1)
    dev_docs = topic_corpus(200, seed=2)
    cfg = TrainConfig(word_dim=32, entity_dim=32, state_size=64, entity_state_size=32, filter_sizes=(3, 4, 5),
                      feature_maps=(16, 16, 16), batch_size=50, dropout=0.5, max_epochs=15, patience=3,
                      encoder="cnn", pooling="firm", gate=True, k_candidates=(1, 2, 5, 10, 20), tune_k_epochs=3)
    start = time.perf_counter()
    k, history = tune_k(cfg, train_docs, dev_docs)
    base = build_model(cfg.replace(use_e2t=False), train_docs)
    base_ppl = train(base, train_docs, dev_docs).best_dev_ppl
    e2t = build_model(cfg.replace(k=k), train_docs)
    e2t_ppl = train(e2t, train_docs, dev_docs).best_dev_ppl
    seconds = time.perf_counter() - start
    ratio = e2t_ppl / base_ppl
    report("relative E2T benefit", ratio <= 0.9 and seconds < 1800,
           f"tuned k={k} ({', '.join(f'{kk}:{p:.3f}' for kk, p in history)}); dev ppl BASE {base_ppl:.3f}, "
           f"E2T {e2t_ppl:.3f}, ratio {ratio:.3f} (<=0.9), {seconds:.0f}s (<1800s)")


def _stop_rule(cands, ppl):
    """Reference rule: walk forward, stop at the first increase, keep the one before."""
    for i in range(1, len(cands)):
        if ppl[i] > ppl[i - 1]:
            return cands[i - 1]
    return cands[-1]


def test_tune_k_rule():
    cands = [1, 2, 5, 10, 20]
    rng = np.random.default_rng(5)
    wrong, unimodal_wrong, cases = [], [], 0
    for _ in range(500):
        ppl = list(rng.permutation(5) + rng.uniform(0, 0.5, size=5) + 8)
        if ppl.count(min(ppl)) != 1:
            continue
        cases += 1
        k, hist = select_k(cands, dict(zip(cands, ppl)).__getitem__)
        if k != _stop_rule(cands, ppl):
            wrong.append(ppl)
    for j in range(5):
        # decreasing to a unique minimum at j, then increasing: the rule returns the minimizer
        ppl = [10 + abs(i - j) for i in range(5)]
        if select_k(cands, dict(zip(cands, ppl)).__getitem__)[0] != cands[j]:
            unimodal_wrong.append(j)
    ex = select_k([1, 2, 5, 10], dict(zip([1, 2, 5, 10], [12, 11, 10.5, 11.2])).__getitem__)[0]
    report("tune_k rule", not wrong and not unimodal_wrong and ex == 5,
           f"{cases} random sequences, mismatches {len(wrong)}; unimodal minimizer mismatches {unimodal_wrong}; "
           f"12,11,10.5,11.2 -> {ex}")


def test_checkpoint_round_trip(tmp_path):
    docs = topic_corpus(60, seed=3)
    cfg = TrainConfig(word_dim=12, entity_dim=12, state_size=16, entity_state_size=8, filter_sizes=(3, 4),
                      feature_maps=(8, 8), batch_size=20, dropout=0.2, max_epochs=3, k=2, beam_size=4, max_decode_len=8)
    model = build_model(cfg, docs)
    train(model, docs[:40], docs[40:])
    model.save(tmp_path / "m")
    loaded = Summarizer.load(tmp_path / "m")
    inputs = docs[40:60]
    diffs = 0
    for doc in inputs:
        a = model.summarize_ids(doc)
        b = loaded.summarize_ids(doc)
        sa = beam_search(*model.decoder_fn(doc), bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=8, beam=4).score
        sb = beam_search(*loaded.decoder_fn(doc), bos_id=C.BOS_ID, eos_id=C.EOS_ID, max_len=8, beam=4).score
        diffs += a != b or np.float64(sa).tobytes() != np.float64(sb).tobytes()
    same_params = all(model.params[n].value.tobytes() == v.value.tobytes() for n, v in loaded.params.items())
    ppl_same = perplexity(model, inputs) == perplexity(loaded, inputs)
    report("checkpoint round trip", diffs == 0 and same_params and ppl_same,
           f"{len(inputs)} decodes, {diffs} differ (tokens or score bits); parameters bit-identical {same_params}")
