"""Command-line entry point.

    e2tsum train     --config c.cfg --data train.jsonl [--dev dev.jsonl] --out model/
    e2tsum tune-k    --config c.cfg --data train.jsonl --dev dev.jsonl [--output k.tsv]
    e2tsum summarize --model model/ --input docs.jsonl [--output out.txt]
    e2tsum evaluate  --model model/ --data test.jsonl [--output rouge.tsv]
    e2tsum annotate  --gazetteer gaz.tsv --input raw.txt [--output corpus.jsonl]
    e2tsum stats     --data corpus.jsonl [--output stats.tsv]
    e2tsum gradcheck

Every verb accepts ``--set key=value`` overrides and ``--figures DIR``.
"""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from dataclasses import dataclass, field

from . import corpus as C
from .config import ConfigError, apply_overrides, load_config

VERBS = ("train", "tune-k", "summarize", "evaluate", "annotate", "stats", "gradcheck")

log = logging.getLogger("e2tsum")


class UserError(Exception):
    pass


@dataclass
class Command:
    verb: str
    config: str = None
    data: str = None
    dev: str = None
    input: str = None
    output: str = None
    out: str = None
    model: str = None
    gazetteer: str = None
    figures: str = None
    overrides: list = field(default_factory=list)
    verbose: bool = False


def build_parser():
    parser = argparse.ArgumentParser(prog="e2tsum", description="Entity-guided abstractive summarization.")
    sub = parser.add_subparsers(dest="verb", metavar="VERB", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="config override (repeatable; wins over --config)")
        p.add_argument("--figures", help="directory for figures (default: next to the output)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = common(sub.add_parser("train", help="train a model"))
    p.add_argument("--data", required=True)
    p.add_argument("--dev")
    p.add_argument("--out", default="model")
    p = common(sub.add_parser("tune-k", help="choose k for firm attention by dev perplexity"))
    p.add_argument("--data", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--output")
    p = common(sub.add_parser("summarize", help="decode summaries, one per input line"))
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="corpus .jsonl, or plain text (one document per line)")
    p.add_argument("--gazetteer", help="annotate plain-text input with this gazetteer")
    p.add_argument("--output")
    p = common(sub.add_parser("evaluate", help="ROUGE-1/2/L F1 on a test corpus"))
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    p = common(sub.add_parser("annotate", help="link entities with a gazetteer; emit corpus JSON lines"))
    p.add_argument("--gazetteer", required=True)
    p.add_argument("--input", required=True, help="lines of 'source<TAB>target'")
    p.add_argument("--output")
    p = common(sub.add_parser("stats", help="dataset statistics"))
    p.add_argument("--data", required=True)
    p.add_argument("--output")
    common(sub.add_parser("gradcheck", help="finite-difference gradient suite"))
    return parser


def parse_args(argv):
    ns = build_parser().parse_args(argv)
    fields_ = {k: v for k, v in vars(ns).items() if k in Command.__dataclass_fields__}
    return Command(**fields_)


# ---------------------------------------------------------------- helpers

def _need(path, what="file"):
    if path and not os.path.exists(path):
        raise UserError(f"{what} not found: {path}")
    return path


def _open_out(path):
    if not path:
        return contextlib.nullcontext(sys.stdout)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="\n")


def _figdir(cmd, default):
    return cmd.figures or default


def _config(cmd):
    return load_config(_need(cmd.config, "config"), cmd.overrides)


def _tokenize(text):
    return text.lower().split()


def holdout(docs, fraction=0.05):
    """Deterministic tail split used when no dev corpus is given."""
    n_dev = max(1, int(round(len(docs) * fraction)))
    if len(docs) <= n_dev:
        return docs, docs
    return docs[:-n_dev], docs[-n_dev:]


# ---------------------------------------------------------------- verbs

def cmd_train(cmd):
    from .model import build_model
    from .plotting import plot_training_log
    from .training import train

    config = _config(cmd)
    docs = C.load_corpus(_need(cmd.data))
    if cmd.dev:
        train_docs, dev_docs = docs, C.load_corpus(_need(cmd.dev))
    else:
        train_docs, dev_docs = holdout(docs)
    model = build_model(config, train_docs)
    log_path = os.path.join(cmd.out, "train.log")
    os.makedirs(cmd.out, exist_ok=True)
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_epoch(row, _):
            fh.write(row.to_tsv() + "\n")
            fh.flush()
            print(row.to_tsv(), flush=True)
        result = train(model, train_docs, dev_docs, config, on_epoch=on_epoch)
    model.save(cmd.out)
    fig = plot_training_log(result.log, os.path.join(_figdir(cmd, os.path.join(cmd.out, "figures")), "training.png"),
                            result.best_epoch)
    print(f"best epoch {result.best_epoch}, dev perplexity {result.best_dev_ppl:.4f}; saved {cmd.out}; figure {fig}")
    return 0


def cmd_tune_k(cmd):
    from .plotting import plot_k_search
    from .training import tune_k

    config = _config(cmd)
    train_docs = C.load_corpus(_need(cmd.data))
    dev_docs = C.load_corpus(_need(cmd.dev))
    chosen, history = tune_k(config, train_docs, dev_docs)
    with _open_out(cmd.output) as fh:
        fh.write("k\tdev_ppl\n")
        for k, ppl in history:
            fh.write(f"{k}\t{ppl:.6f}\n")
        fh.write(f"# chosen k={chosen}\n")
    default = os.path.dirname(os.path.abspath(cmd.output)) if cmd.output else "figures"
    plot_k_search(history, chosen, os.path.join(_figdir(cmd, default), "tune_k.png"))
    return 0


def _summarize_inputs(cmd):
    if cmd.input.endswith(".jsonl"):
        return C.load_corpus(_need(cmd.input), require_target=False)
    gaz = C.Gazetteer.load(_need(cmd.gazetteer)) if cmd.gazetteer else None
    docs = []
    with open(_need(cmd.input), encoding="utf-8") as fh:
        for i, line in enumerate(fh, 1):
            tokens = _tokenize(line.split("\t")[0])
            if not tokens:
                raise UserError(f"{cmd.input}:{i}: empty document")
            ents = C.annotate_gazetteer(tokens, gaz) if gaz else []
            docs.append(C.AnnotatedDocument(str(i), tokens, [], ents))
    return docs


def _load_model(cmd):
    from .model import Summarizer

    _need(os.path.join(cmd.model, "model.ckpt"), "checkpoint")
    model = Summarizer.load(cmd.model)
    if cmd.overrides:
        # decoding knobs (beam_size, max_decode_len, length_norm); the
        # architecture is fixed by the saved config
        model.config = apply_overrides(model.config, cmd.overrides)
    return model


def cmd_summarize(cmd):
    model = _load_model(cmd)
    docs = _summarize_inputs(cmd)
    with _open_out(cmd.output) as fh:
        for doc in docs:
            fh.write(" ".join(model.summarize(doc)) + "\n")
    return 0


def cmd_evaluate(cmd):
    from .metrics import evaluate_corpus
    from .plotting import plot_rouge

    model = _load_model(cmd)
    docs = C.load_corpus(_need(cmd.data))
    report, _ = evaluate_corpus(docs, model.summarize)
    with _open_out(cmd.output) as fh:
        fh.write(report.to_tsv())
    default = os.path.dirname(os.path.abspath(cmd.output)) if cmd.output else "figures"
    plot_rouge(report, os.path.join(_figdir(cmd, default), "rouge.png"), label=os.path.basename(cmd.model.rstrip("/")))
    return 0


def cmd_annotate(cmd):
    import json

    gaz = C.Gazetteer.load(_need(cmd.gazetteer))
    with open(_need(cmd.input), encoding="utf-8") as fh, _open_out(cmd.output) as out:
        for i, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            src, _, tgt = line.partition("\t")
            tokens = _tokenize(src)
            doc = C.AnnotatedDocument(str(i), tokens, _tokenize(tgt), C.annotate_gazetteer(tokens, gaz))
            out.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")
    return 0


def cmd_stats(cmd):
    from .plotting import plot_entity_counts

    docs = C.load_corpus(_need(cmd.data))
    report = C.corpus_stats(docs)
    with _open_out(cmd.output) as fh:
        fh.write(report.to_tsv())
    # stdout-only runs skip the figure unless --figures is given
    figdir = cmd.figures or (os.path.dirname(os.path.abspath(cmd.output)) if cmd.output else None)
    if figdir:
        plot_entity_counts(docs, os.path.join(figdir, "entity_counts.png"))
    return 0


def cmd_gradcheck(cmd):
    from .gradcheck import run_suite

    results, seconds = run_suite()
    print("op\tmax_rel_err\ttol\tstatus")
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"# {sum(r.passed for r in results)}/{len(results)} passed in {seconds:.1f}s")
    return 0 if ok else 1


DISPATCH = {
    "train": cmd_train,
    "tune-k": cmd_tune_k,
    "summarize": cmd_summarize,
    "evaluate": cmd_evaluate,
    "annotate": cmd_annotate,
    "stats": cmd_stats,
    "gradcheck": cmd_gradcheck,
}


def run(cmd):
    logging.basicConfig(level=logging.INFO if cmd.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return DISPATCH[cmd.verb](cmd)
    except (UserError, C.CorpusError, ConfigError, FileNotFoundError) as exc:
        print(f"e2tsum {cmd.verb}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"e2tsum {cmd.verb}: internal error: {exc}", file=sys.stderr)
        return 2


def main(argv=None):
    cmd = parse_args(sys.argv[1:] if argv is None else argv)
    return run(cmd)


if __name__ == "__main__":
    sys.exit(main())
