"""Figures written next to the tab-separated reports."""
from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 150,
}


def new_figure(width=5.0, height=None, ncols=1):
    golden = (math.sqrt(5) - 1.0) / 2.0
    with plt.rc_context(RC):
        fig, ax = plt.subplots(1, ncols, figsize=(width, height or width * golden))
    return fig, ax


def save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with plt.rc_context(RC):
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_training_log(rows, path, best_epoch=None):
    """Train loss and dev perplexity per epoch."""
    fig, (ax_loss, ax_ppl) = new_figure(width=7.0, height=2.8, ncols=2)
    epochs = [r.epoch for r in rows]
    ax_loss.plot(epochs, [r.train_loss for r in rows], marker="o", ms=3, color="C0")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train NLL")
    ax_ppl.plot(epochs, [r.dev_ppl for r in rows], marker="o", ms=3, color="C1")
    if best_epoch is not None:
        ax_ppl.axvline(best_epoch, color="0.6", ls="--", lw=0.8, label=f"best epoch {best_epoch}")
        ax_ppl.legend()
    ax_ppl.set_xlabel("epoch")
    ax_ppl.set_ylabel("dev perplexity")
    return save(fig, path)


def plot_k_search(history, chosen, path):
    fig, ax = new_figure()
    ks = [k for k, _ in history]
    ax.plot(range(len(ks)), [p for _, p in history], marker="o", color="C2")
    ax.set_xticks(range(len(ks)), [str(k) for k in ks])
    if chosen in ks:
        i = ks.index(chosen)
        ax.scatter([i], [history[i][1]], s=80, facecolors="none", edgecolors="k", label=f"chosen k={chosen}")
        ax.legend()
    ax.set_xlabel("k (firm attention)")
    ax.set_ylabel("dev perplexity")
    return save(fig, path)


def plot_rouge(report, path, label="model"):
    fig, ax = new_figure(width=4.0)
    scores = report.as_dict()
    bars = ax.bar(list(scores), list(scores.values()), color=["C0", "C1", "C2"], width=0.6)
    ax.bar_label(bars, fmt="%.2f", fontsize=8)
    ax.set_ylim(0, 100)
    ax.set_ylabel("F1 x 100")
    ax.set_title(label)
    return save(fig, path)


def plot_entity_counts(docs, path):
    """Histogram of linked entities per document."""
    fig, ax = new_figure()
    counts = [len(d.entities) for d in docs]
    top = max(counts) if counts else 0
    ax.hist(counts, bins=range(0, top + 2), color="C4", edgecolor="white", align="left")
    ax.set_xlabel("entities per document")
    ax.set_ylabel("documents")
    return save(fig, path)
